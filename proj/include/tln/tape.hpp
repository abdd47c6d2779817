#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "tln/tensor.hpp"

namespace tln {

enum class Mode { Train, Eval };

// Handle to a value recorded on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

inline constexpr double kStandardizeEps = 1e-5;

// Records primitive applications in execution (= topological) order and
// replays their backward rules in reverse. One tape per forward pass; a tape
// and its values are single-owner.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf with no gradient tracking.
    Var constant(Tensor t);
    // External parameter leaf. Gradients are accumulated into t.grad by
    // backward() when t.requires_grad. Repeat registration of the same
    // tensor returns the same Var.
    Var param(Tensor& t);
    // Internal leaf with gradient tracking (tests, gradient checking).
    Var leaf(Tensor t);

    const Tensor& val(Var v) const;
    // Gradient of a value after backward(); zeros if the value never
    // received any (e.g. a parameter unreachable from the loss).
    std::vector<double> grad_of(Var v) const;

    std::size_t num_nodes() const { return nodes_.size(); }

    // Reverse accumulation from a scalar root. Errors: non-scalar root,
    // nothing recorded, or a second call without reset().
    void backward(Var root);
    // Clears gradients and the backward-done flag; values and nodes stay.
    void reset();

    // --- primitives -------------------------------------------------------
    Var affine(Var x, Var w, Var b);                                  // [B,I]x[I,O]+[O]
    Var conv2d(Var x, Var k, std::int64_t stride, std::int64_t pad);  // cross-correlation
    Var bias_channels(Var x, Var b);                                  // [B,F,H,W]+[F]
    Var maxpool2d(Var x, std::int64_t size, std::int64_t stride);
    Var relu(Var x);
    Var flatten_rows(Var x);  // [B,...] -> [B,rest]

    struct SoftmaxResult {
        Var loss;      // scalar, mean over batch of -log p[label]
        Tensor probs;  // [B,C], rows sum to 1
    };
    SoftmaxResult softmax_xent(Var logits, const std::vector<std::int64_t>& labels);

    Var l2_normalize_rows(Var x);  // rows scaled to unit norm (1e-12 guard)

    struct StandardizeResult {
        Var y;
        std::vector<double> mean;  // per-feature batch statistics
        std::vector<double> var;   // biased
    };
    StandardizeResult standardize_batch(Var x);  // train path, differentiable through stats
    Var standardize_fixed(Var x, const std::vector<double>& mean,
                          const std::vector<double>& var);  // eval path

    Var scale_features(Var x, Var gamma, Var beta);  // y = x*gamma + beta, per feature
    Var scale_uniform(Var x, Var gamma);             // single scalar gamma

    // Small algebra used by tests and gradient checking.
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale_const(Var a, double c);
    Var square(Var a);
    Var sum_all(Var a);

private:
    struct Slot {
        Tensor value;
        std::vector<double> grad;
        bool needs_grad = false;
        Tensor* external = nullptr;
    };
    struct Node {
        std::vector<int> inputs;
        int output;
        const char* op;
        std::function<void(Tape&)> backward;
    };

    int push_slot(Tensor t, bool needs_grad, Tensor* external = nullptr);
    void record(std::vector<int> inputs, int output, const char* op,
                std::function<void(Tape&)> backward);
    Slot& slot(int id) { return slots_[static_cast<std::size_t>(id)]; }
    const Slot& slot(int id) const { return slots_[static_cast<std::size_t>(id)]; }
    std::vector<double>& grad_buf(int id);
    bool needs(int id) const { return slots_[static_cast<std::size_t>(id)].needs_grad; }

    std::vector<Slot> slots_;
    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> registered_;
    bool backward_done_ = false;
};

}  // namespace tln
