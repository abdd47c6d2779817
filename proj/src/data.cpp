#include "tln/data.hpp"

#include <algorithm>
#include <cmath>

#include "tln/error.hpp"

namespace tln {

Tensor Dataset::image(std::int64_t i) const {
    if (i < 0 || i >= count()) {
        throw IndexError("sample " + std::to_string(i) + " outside dataset of " +
                         std::to_string(count()));
    }
    Tensor t = Tensor::zeros({channels, height, width});
    const std::uint8_t* src = pixels.data() + i * sample_values();
    for (std::int64_t j = 0; j < sample_values(); ++j) {
        t.data[std::size_t(j)] = double(src[j]) / 255.0;
    }
    return t;
}

void Dataset::validate() const {
    if (channels < 1 || height < 1 || width < 1) {
        throw DataError("dataset '" + name + "' has degenerate dimensions");
    }
    if (class_names.empty()) throw DataError("dataset '" + name + "' has no classes");
    if (pixels.size() != labels.size() * std::size_t(sample_values())) {
        throw DataError("dataset '" + name + "': " + std::to_string(pixels.size()) +
                        " pixel bytes for " + std::to_string(labels.size()) + " samples of " +
                        std::to_string(sample_values()) + " values");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_names.size()) {
            throw DataError("dataset '" + name + "': label " + std::to_string(labels[i]) +
                            " at record " + std::to_string(i) + " exceeds " +
                            std::to_string(class_names.size()) + " classes");
        }
    }
    if (channel_mean.size() != std::size_t(channels) ||
        channel_std.size() != std::size_t(channels)) {
        throw DataError("dataset '" + name + "' channel statistics missing");
    }
}

void Dataset::compute_channel_stats() {
    channel_mean.assign(std::size_t(channels), 0.0);
    channel_std.assign(std::size_t(channels), 0.0);
    if (count() == 0) return;
    const std::int64_t hw = height * width;
    const double n = double(count() * hw);
    for (std::int64_t i = 0; i < count(); ++i) {
        const std::uint8_t* src = pixels.data() + i * sample_values();
        for (std::int64_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < hw; ++j) acc += double(src[c * hw + j]) / 255.0;
            channel_mean[std::size_t(c)] += acc;
        }
    }
    for (auto& m : channel_mean) m /= n;
    for (std::int64_t i = 0; i < count(); ++i) {
        const std::uint8_t* src = pixels.data() + i * sample_values();
        for (std::int64_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < hw; ++j) {
                const double d = double(src[c * hw + j]) / 255.0 - channel_mean[std::size_t(c)];
                acc += d * d;
            }
            channel_std[std::size_t(c)] += acc;
        }
    }
    for (auto& s : channel_std) s = std::max(std::sqrt(s / n), 1e-6);
}

SampleSet full_set(std::shared_ptr<const Dataset> data) {
    SampleSet s;
    s.idx.resize(std::size_t(data->count()));
    for (std::int64_t i = 0; i < data->count(); ++i) s.idx[std::size_t(i)] = i;
    s.data = std::move(data);
    return s;
}

std::pair<SampleSet, SampleSet> split_dataset(std::shared_ptr<const Dataset> data,
                                              double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ContractError("train fraction must be in (0,1)");
    }
    std::vector<std::vector<std::int64_t>> per_class(std::size_t(data->class_count()));
    for (std::int64_t i = 0; i < data->count(); ++i) {
        per_class[data->labels[std::size_t(i)]].push_back(i);
    }
    Rng rng(mix_seed(seed, 0x5117));
    SampleSet train, test;
    train.data = data;
    test.data = data;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        auto& members = per_class[c];
        if (members.size() < 2) {
            throw ContractError("class " + std::to_string(c) + " has " +
                                std::to_string(members.size()) +
                                " samples; at least 2 needed to stratify");
        }
        rng.shuffle(members);
        auto n_train = std::int64_t(train_fraction * double(members.size()));
        n_train = std::clamp<std::int64_t>(n_train, 1, std::int64_t(members.size()) - 1);
        train.idx.insert(train.idx.end(), members.begin(), members.begin() + n_train);
        test.idx.insert(test.idx.end(), members.begin() + n_train, members.end());
    }
    std::sort(train.idx.begin(), train.idx.end());
    std::sort(test.idx.begin(), test.idx.end());
    return {std::move(train), std::move(test)};
}

Tensor reflect_pad(const Tensor& img, std::int64_t pad) {
    if (img.ndim() != 3) throw DimensionError("reflect_pad expects [C,H,W], got " + shape_str(img.shape));
    if (pad == 0) return img;
    const std::int64_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    if (pad >= H || pad >= W) {
        throw ContractError("reflect padding " + std::to_string(pad) + " too large for " +
                            shape_str(img.shape));
    }
    const std::int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;
    Tensor out = Tensor::zeros({C, Hp, Wp});
    auto mirror = [](std::int64_t i, std::int64_t n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
    };
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t h = 0; h < Hp; ++h) {
            const std::int64_t sh = mirror(h - pad, H);
            for (std::int64_t w = 0; w < Wp; ++w) {
                const std::int64_t sw = mirror(w - pad, W);
                out.data[std::size_t((c * Hp + h) * Wp + w)] =
                    img.data[std::size_t((c * H + sh) * W + sw)];
            }
        }
    }
    return out;
}

Augmentor::Augmentor(AugmentConfig config, std::vector<double> mean, std::vector<double> stdev)
    : config_(config), mean_(std::move(mean)), std_(std::move(stdev)) {}

Tensor Augmentor::crop_normalized(const Tensor& padded, std::int64_t ch, std::int64_t cw,
                                  std::int64_t top, std::int64_t left, bool flip) const {
    const std::int64_t C = padded.shape[0], Hp = padded.shape[1], Wp = padded.shape[2];
    if (top < 0 || left < 0 || top + ch > Hp || left + cw > Wp) {
        throw ContractError("crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                            " does not fit padded image " + shape_str(padded.shape));
    }
    Tensor out = Tensor::zeros({C, ch, cw});
    for (std::int64_t c = 0; c < C; ++c) {
        const double m = mean_[std::size_t(c)];
        const double inv = 1.0 / std_[std::size_t(c)];
        for (std::int64_t h = 0; h < ch; ++h) {
            for (std::int64_t w = 0; w < cw; ++w) {
                const std::int64_t sw = flip ? (cw - 1 - w) : w;
                const double v = padded.data[std::size_t((c * Hp + top + h) * Wp + left + sw)];
                out.data[std::size_t((c * ch + h) * cw + w)] = (v - m) * inv;
            }
        }
    }
    return out;
}

Tensor Augmentor::train(const Tensor& img, Rng& rng) const {
    const std::int64_t ch = config_.crop_h ? config_.crop_h : img.shape[1];
    const std::int64_t cw = config_.crop_w ? config_.crop_w : img.shape[2];
    Tensor padded = reflect_pad(img, config_.pad);
    const std::int64_t max_top = padded.shape[1] - ch;
    const std::int64_t max_left = padded.shape[2] - cw;
    if (max_top < 0 || max_left < 0) {
        throw ContractError("crop larger than padded image " + shape_str(padded.shape));
    }
    const std::int64_t top = max_top > 0 ? rng.below(max_top + 1) : 0;
    const std::int64_t left = max_left > 0 ? rng.below(max_left + 1) : 0;
    const bool flip = rng.bernoulli(config_.flip_p);
    return crop_normalized(padded, ch, cw, top, left, flip);
}

Tensor Augmentor::eval(const Tensor& img) const {
    const std::int64_t ch = config_.crop_h ? config_.crop_h : img.shape[1];
    const std::int64_t cw = config_.crop_w ? config_.crop_w : img.shape[2];
    Tensor padded = reflect_pad(img, config_.pad);
    const std::int64_t top = (padded.shape[1] - ch) / 2;
    const std::int64_t left = (padded.shape[2] - cw) / 2;
    if (top < 0 || left < 0) {
        throw ContractError("crop larger than padded image " + shape_str(padded.shape));
    }
    return crop_normalized(padded, ch, cw, top, left, false);
}

}  // namespace tln
