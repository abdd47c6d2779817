#include "tln/optim.hpp"

#include <cmath>

#include "tln/error.hpp"

namespace tln {

void Schedule::validate() const {
    if (!(base_lr > 0.0)) throw ContractError("schedule base_lr must be positive");
    if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
        throw ContractError("schedule decay_factor must be in (0,1)");
    }
    if (step_epochs < 1) throw ContractError("schedule step_epochs must be positive");
}

double lr_at(const Schedule& schedule, std::int64_t epoch) {
    if (epoch < 0) throw ContractError("epoch must be non-negative");
    return schedule.base_lr * std::pow(schedule.decay_factor, double(epoch / schedule.step_epochs));
}

void Budget::validate() const {
    if (iterations < 0) throw ContractError("budget iterations must be non-negative");
    if (batch_size < 1) throw ContractError("budget batch_size must be positive");
}

SgdState make_sgd_state(Tln& net, double momentum) {
    SgdState state;
    state.momentum = momentum;
    for_each_param(net, [&state](Tensor& p, std::int64_t) {
        state.velocity.emplace_back(p.data.size(), 0.0);
    });
    return state;
}

void sgd_step(Tln& net, const FreezePlan& plan, SgdState& state, double lr) {
    if (plan.trainable.size() != net.units.size()) {
        throw ContractError("freeze plan does not match network");
    }
    std::size_t slot = 0;
    for_each_param(net, [&](Tensor& p, std::int64_t unit) {
        if (slot >= state.velocity.size()) {
            throw ContractError("optimizer state does not match network");
        }
        auto& vel = state.velocity[slot++];
        const bool trainable = unit < 0 || plan.trainable[static_cast<std::size_t>(unit)];
        if (!trainable) return;
        if (!p.has_grad()) {
            throw ContractError("trainable parameter (unit " + std::to_string(unit) +
                                ") has no gradient");
        }
        const double mult = unit < 0 ? plan.psi_lr_mult : plan.lr_mult[static_cast<std::size_t>(unit)];
        const double step = lr * mult;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            vel[i] = state.momentum * vel[i] - step * p.grad[i];
            p.data[i] += vel[i];
        }
    });
}

void zero_grads(Tln& net) {
    for_each_param(net, [](Tensor& p, std::int64_t) { p.zero_grad(); });
}

}  // namespace tln
