#pragma once

#include <iosfwd>
#include <vector>

#include "tln/data.hpp"
#include "tln/network.hpp"
#include "tln/optim.hpp"

namespace tln {

struct EpochMetrics {
    std::int64_t iteration = 0;  // iterations completed so far
    std::int64_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean over the epoch's iterations
    double train_acc = 0.0;
    double test_acc = 0.0;
};

// One line-delimited JSON record per epoch.
void write_metrics(std::ostream& os, const EpochMetrics& m);

struct TrainOptions {
    Budget budget;
    Schedule schedule;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    AugmentConfig augment;
    std::int64_t eval_batch = 64;
    bool eval_train = true;        // per-epoch accuracy on the training split
    std::ostream* log = nullptr;   // optional metric stream
};

struct TrainResult {
    std::vector<EpochMetrics> trace;
};

// Minibatch SGD over budget.iterations steps. An epoch is
// ceil(|train|/batch_size) iterations; metrics are recorded per epoch and at
// the final iteration. Frozen units stay bit-identical. NaN loss aborts with
// the iteration index.
TrainResult train(Tln& net, const FreezePlan& plan, const SampleSet& train_set,
                  const SampleSet& test_set, const TrainOptions& options);

// Top-1 accuracy under eval-mode forward (center-crop path).
double evaluate(Tln& net, const SampleSet& ds, const Augmentor& aug, std::int64_t batch = 64);

}  // namespace tln
