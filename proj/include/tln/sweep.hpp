#pragma once

#include <string>
#include <vector>

#include "tln/train.hpp"

namespace tln {

struct SweepVariant {
    std::string label;
    TlnConfig config;          // nu is overridden per setup
    bool random_init = false;  // random-initialization baseline arm
};

struct SweepConfig {
    std::vector<SweepVariant> variants;
    std::uint64_t master_seed = 1;
    std::int64_t repeats = 1;
    Budget budget;
    Schedule schedule;
    double momentum = 0.9;
    AugmentConfig augment;
    std::string dataset_id;
    std::int64_t jobs = 1;

    void validate() const;
};

// The K mutually exclusive setups: nu descending from the last unit to 1.
std::vector<std::int64_t> generate_setups(const Tln& net);
std::vector<std::int64_t> generate_setups(std::int64_t total_units);

struct SweepCell {
    double accuracy = 0.0;
    std::vector<EpochMetrics> trace;
};

struct SweepResult {
    struct VariantResult {
        std::string label;
        std::vector<std::int64_t> nus;
        std::vector<std::vector<SweepCell>> cells;  // [nu_index][repeat]
    };
    SweepConfig config;
    std::vector<VariantResult> variants;

    const VariantResult& variant(const std::string& label) const;
    const SweepCell& cell(const std::string& label, std::int64_t nu, std::int64_t repeat) const;
    double mean_accuracy(const std::string& label, std::int64_t nu) const;
};

// Seed for one sweep cell. Independent of nu so that every setup of a repeat
// starts from bit-identical initial parameters.
std::uint64_t cell_seed(std::uint64_t master_seed, std::int64_t variant_index,
                        std::int64_t repeat);

// Builds the initial (untrained) network for a cell.
Tln build_cell(const SweepConfig& config, const PretrainedNetwork& chi, std::int64_t variant_index,
               std::int64_t repeat, std::int64_t nu);

// Runs every (variant, nu, repeat) cell; parallel over config.jobs workers,
// bit-identical to the serial execution.
SweepResult run_sweep(const SweepConfig& config, const PretrainedNetwork& chi,
                      const SampleSet& train_set, const SampleSet& test_set);

// Seed-averaged accuracy difference target - baseline, in accuracy points.
double gain_points(const SweepResult& result, const std::string& baseline,
                   const std::string& target, std::int64_t nu);

// Argmax of seed-averaged accuracy over nu; ties resolve to the larger nu
// (fewer tuned units).
std::pair<std::int64_t, double> best_setup(const SweepResult& result, const std::string& label);

// 95% confidence half-width over repeats (normal approximation).
double accuracy_ci95(const SweepResult& result, const std::string& label, std::int64_t nu);

}  // namespace tln
