#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tln/rng.hpp"
#include "tln/tensor.hpp"

namespace tln {

// In-memory image classification dataset: 8-bit pixels, one label byte per
// sample, per-channel statistics of the [0,1]-scaled pixels.
struct Dataset {
    std::string name;
    std::vector<std::string> class_names;
    std::int64_t channels = 0, height = 0, width = 0;
    std::vector<std::uint8_t> pixels;  // count * C*H*W, row-major per sample
    std::vector<std::uint8_t> labels;  // count
    std::vector<double> channel_mean;  // of [0,1] pixels
    std::vector<double> channel_std;

    std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
    std::int64_t class_count() const { return static_cast<std::int64_t>(class_names.size()); }
    std::int64_t sample_values() const { return channels * height * width; }

    Tensor image(std::int64_t i) const;  // [C,H,W] scaled to [0,1]
    void validate() const;
    void compute_channel_stats();
};

// Index view into a shared dataset.
struct SampleSet {
    std::shared_ptr<const Dataset> data;
    std::vector<std::int64_t> idx;

    std::int64_t size() const { return static_cast<std::int64_t>(idx.size()); }
    Tensor image(std::int64_t i) const { return data->image(idx[static_cast<std::size_t>(i)]); }
    std::int64_t label(std::int64_t i) const {
        return data->labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
};

SampleSet full_set(std::shared_ptr<const Dataset> data);

// Stratified per class, disjoint, union = input, deterministic per seed.
// Classes with fewer than 2 samples cannot be stratified.
std::pair<SampleSet, SampleSet> split_dataset(std::shared_ptr<const Dataset> data,
                                              double train_fraction, std::uint64_t seed);

struct AugmentConfig {
    std::int64_t pad = 2;       // reflect padding before the random crop
    std::int64_t crop_h = 0;    // 0 = keep original size
    std::int64_t crop_w = 0;
    double flip_p = 0.5;
};

// Train-path pipeline: reflect-pad, random crop, horizontal flip, then
// per-channel standardization with dataset statistics. The eval path center
// crops without flipping.
class Augmentor {
public:
    Augmentor(AugmentConfig config, std::vector<double> mean, std::vector<double> stdev);

    Tensor train(const Tensor& img, Rng& rng) const;
    Tensor eval(const Tensor& img) const;

    const AugmentConfig& config() const { return config_; }

private:
    Tensor crop_normalized(const Tensor& padded, std::int64_t ch, std::int64_t cw,
                           std::int64_t top, std::int64_t left, bool flip) const;
    AugmentConfig config_;
    std::vector<double> mean_, std_;
};

// Reflect-pad a [C,H,W] image on both spatial axes.
Tensor reflect_pad(const Tensor& img, std::int64_t pad);

}  // namespace tln
