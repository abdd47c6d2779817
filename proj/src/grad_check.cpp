#include "tln/grad_check.hpp"

#include <cmath>

#include "tln/error.hpp"

namespace tln {

namespace {

double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    Var out = f(tape, vars);
    const Tensor& y = tape.val(out);
    if (y.size() != 1) throw ContractError("grad_check requires a scalar-valued function");
    return y.data[0];
}

}  // namespace

double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double eps) {
    // Analytic gradients via one reverse pass.
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (auto& t : inputs) {
            t.requires_grad = true;
            vars.push_back(tape.param(t));
        }
        Var out = f(tape, vars);
        if (tape.val(out).size() != 1) {
            throw ContractError("grad_check requires a scalar-valued function");
        }
        tape.backward(out);
        for (const auto& v : vars) analytic.push_back(tape.grad_of(v));
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].data.size(); ++j) {
            const double saved = inputs[i].data[j];
            inputs[i].data[j] = saved + eps;
            const double up = eval_scalar(f, inputs);
            inputs[i].data[j] = saved - eps;
            const double dn = eval_scalar(f, inputs);
            inputs[i].data[j] = saved;
            const double numeric = (up - dn) / (2.0 * eps);
            const double a = analytic[i][j];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace tln
