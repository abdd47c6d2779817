#pragma once

#include <cstdint>
#include <vector>

#include "tln/network.hpp"

namespace tln {

// Piecewise-constant schedule: base_lr scaled by decay_factor every
// step_epochs epochs.
struct Schedule {
    double base_lr = 0.005;
    double decay_factor = 0.1;
    std::int64_t step_epochs = 10;
    void validate() const;
};

double lr_at(const Schedule& schedule, std::int64_t epoch);

struct Budget {
    std::int64_t iterations = 2000;
    std::int64_t batch_size = 100;
    void validate() const;
};

// SGD-with-momentum state: one velocity buffer per learnable tensor, in
// for_each_param order. Frozen parameters keep zero velocities.
struct SgdState {
    double momentum = 0.9;
    std::vector<std::vector<double>> velocity;
};

SgdState make_sgd_state(Tln& net, double momentum = 0.9);

// v <- momentum*v - (lr*mult)*g;  p <- p + v, trainable parameters only.
// Frozen parameters and their velocities are untouched. A trainable
// parameter without a gradient buffer is a contract error.
void sgd_step(Tln& net, const FreezePlan& plan, SgdState& state, double lr);

void zero_grads(Tln& net);

}  // namespace tln
