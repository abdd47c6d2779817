#pragma once

// Shared fixture: a 2-conv + 2-FC toy classifier assembled from raw tape
// primitives, used by the gradient suites. Finite differences are only
// meaningful away from relu kinks and pooling ties, so case generation
// rejects draws whose probe forward passes too close to either.

#include <cmath>
#include <cstdint>
#include <vector>

#include "tln/grad_check.hpp"
#include "tln/rng.hpp"
#include "tln/tape.hpp"

namespace toynet {

using tln::Rng;
using tln::Shape;
using tln::Tape;
using tln::Tensor;
using tln::Var;

struct Probe {
    double relu_margin = 1e30;  // min |pre-relu activation|
    double pool_margin = 1e30;  // min (max - runner-up) over pool windows
};

inline void probe_relu(Probe* p, const Tensor& t) {
    if (!p) return;
    for (double v : t.data) p->relu_margin = std::min(p->relu_margin, std::abs(v));
}

inline void probe_pool(Probe* p, const Tensor& t, std::int64_t size, std::int64_t stride) {
    if (!p) return;
    const std::int64_t B = t.shape[0], C = t.shape[1], H = t.shape[2], W = t.shape[3];
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* xc = t.data.data() + ((b * C + c) * H) * W;
            for (std::int64_t h0 = 0; h0 + size <= H; h0 += stride) {
                for (std::int64_t w0 = 0; w0 + size <= W; w0 += stride) {
                    double best = -1e300, second = -1e300;
                    for (std::int64_t dh = 0; dh < size; ++dh) {
                        for (std::int64_t dw = 0; dw < size; ++dw) {
                            const double v = xc[(h0 + dh) * W + (w0 + dw)];
                            if (v > best) {
                                second = best;
                                best = v;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                    }
                    p->pool_margin = std::min(p->pool_margin, best - second);
                }
            }
        }
    }
}

// inputs: img, k1, b1, k2, b2, w1, fb1, w2, fb2
inline Var toy_forward(Tape& t, const std::vector<Var>& in,
                       const std::vector<std::int64_t>& labels, Probe* probe = nullptr) {
    Var h = t.conv2d(in[0], in[1], 1, 1);
    h = t.bias_channels(h, in[2]);
    probe_relu(probe, t.val(h));
    h = t.relu(h);
    probe_pool(probe, t.val(h), 2, 2);
    h = t.maxpool2d(h, 2, 2);
    h = t.conv2d(h, in[3], 1, 1);
    h = t.bias_channels(h, in[4]);
    probe_relu(probe, t.val(h));
    h = t.relu(h);
    probe_pool(probe, t.val(h), 2, 2);
    h = t.maxpool2d(h, 2, 2);
    h = t.flatten_rows(h);
    h = t.affine(h, in[5], in[6]);
    probe_relu(probe, t.val(h));
    h = t.relu(h);
    h = t.affine(h, in[7], in[8]);
    return t.softmax_xent(h, labels).loss;
}

struct ToyCase {
    std::vector<Tensor> inputs;
    std::vector<std::int64_t> labels;
};

inline Tensor gaussian_tensor(Shape shape, Rng& rng, double scale) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.gaussian() * scale;
    return t;
}

// Draws cases until (a) the probe margins clear the finite-difference epsilon
// by a wide factor and (b) every connected gradient coordinate is large
// enough for central differences to resolve in double precision. Exact-zero
// gradients (relu-dead paths) are fine: the difference is bitwise zero too.
inline ToyCase make_toy_case(std::uint64_t seed, double margin = 2e-3,
                             double grad_floor = 1e-5) {
    for (std::uint64_t salt = 0;; ++salt) {
        Rng rng(tln::mix_seed(seed, salt));
        ToyCase c;
        c.inputs = {
            gaussian_tensor({2, 1, 8, 8}, rng, 1.0),   // img
            gaussian_tensor({2, 1, 3, 3}, rng, 0.5),   // k1
            gaussian_tensor({2}, rng, 0.1),            // b1
            gaussian_tensor({3, 2, 3, 3}, rng, 0.5),   // k2
            gaussian_tensor({3}, rng, 0.1),            // b2
            gaussian_tensor({12, 8}, rng, 0.4),        // w1
            gaussian_tensor({8}, rng, 0.1),            // fb1
            gaussian_tensor({8, 4}, rng, 0.25),        // w2
            gaussian_tensor({4}, rng, 0.05),           // fb2
        };
        c.labels = {rng.below(4), rng.below(4)};

        Tape probe_tape;
        std::vector<Var> vars;
        std::vector<Tensor> owned = c.inputs;
        for (auto& t : owned) {
            t.requires_grad = true;
            vars.push_back(probe_tape.param(t));
        }
        Probe probe;
        Var loss = toy_forward(probe_tape, vars, c.labels, &probe);
        if (probe.relu_margin <= margin || probe.pool_margin <= margin) continue;

        probe_tape.backward(loss);
        bool resolvable = true;
        for (const auto& v : vars) {
            for (double g : probe_tape.grad_of(v)) {
                if (g != 0.0 && std::abs(g) < grad_floor) {
                    resolvable = false;
                    break;
                }
            }
            if (!resolvable) break;
        }
        if (resolvable) return c;
    }
}

}  // namespace toynet
