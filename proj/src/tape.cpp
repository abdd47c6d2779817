#include "tln/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "tln/error.hpp"

namespace tln {

namespace {

std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Zero-padded copy of a [B,C,H,W] tensor's data.
std::vector<double> pad_nchw(const Tensor& x, std::int64_t pad) {
    const std::int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;
    std::vector<double> out(static_cast<std::size_t>(B * C * Hp * Wp), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t h = 0; h < H; ++h) {
                const double* src = x.data.data() + ((b * C + c) * H + h) * W;
                double* dst = out.data() + (((b * C + c) * Hp + h + pad) * Wp + pad);
                std::copy(src, src + W, dst);
            }
        }
    }
    return out;
}

}  // namespace

int Tape::push_slot(Tensor t, bool needs_grad, Tensor* external) {
    Slot s;
    s.value = std::move(t);
    s.needs_grad = needs_grad;
    s.external = external;
    if (needs_grad) s.grad.assign(s.value.data.size(), 0.0);
    slots_.push_back(std::move(s));
    return static_cast<int>(slots_.size()) - 1;
}

void Tape::record(std::vector<int> inputs, int output, const char* op,
                  std::function<void(Tape&)> backward) {
    if (!slot(output).needs_grad) return;  // nothing downstream to differentiate
    nodes_.push_back(Node{std::move(inputs), output, op, std::move(backward)});
}

Var Tape::constant(Tensor t) {
    return Var{push_slot(std::move(t), false)};
}

Var Tape::leaf(Tensor t) {
    return Var{push_slot(std::move(t), true)};
}

Var Tape::param(Tensor& t) {
    auto it = registered_.find(&t);
    if (it != registered_.end()) return Var{it->second};
    int id = push_slot(t, t.requires_grad, t.requires_grad ? &t : nullptr);
    registered_.emplace(&t, id);
    return Var{id};
}

const Tensor& Tape::val(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(slots_.size())) {
        throw ContractError("invalid tape handle");
    }
    return slot(v.id).value;
}

std::vector<double> Tape::grad_of(Var v) const {
    const Slot& s = slot(v.id);
    if (!s.grad.empty()) return s.grad;
    return std::vector<double>(s.value.data.size(), 0.0);
}

std::vector<double>& Tape::grad_buf(int id) {
    Slot& s = slot(id);
    if (s.grad.empty()) s.grad.assign(s.value.data.size(), 0.0);
    return s.grad;
}

void Tape::backward(Var root) {
    if (backward_done_) throw ContractError("repeated backward without reset");
    if (nodes_.empty()) throw ContractError("backward on empty tape");
    const Tensor& r = val(root);
    if (r.size() != 1) {
        throw ContractError("backward root must be scalar, got shape " + shape_str(r.shape));
    }
    backward_done_ = true;
    if (!slot(root.id).needs_grad) return;  // loss independent of every parameter
    grad_buf(root.id)[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward(*this);
    }
    for (auto& s : slots_) {
        if (s.external) {
            s.external->ensure_grad();
            if (!s.grad.empty()) {
                for (std::size_t i = 0; i < s.grad.size(); ++i) s.external->grad[i] += s.grad[i];
            }
        }
    }
}

void Tape::reset() {
    backward_done_ = false;
    for (auto& s : slots_) {
        if (!s.grad.empty()) std::fill(s.grad.begin(), s.grad.end(), 0.0);
    }
}

// ---------------------------------------------------------------------------

Var Tape::affine(Var xv, Var wv, Var bv) {
    const Tensor& x = val(xv);
    const Tensor& w = val(wv);
    const Tensor& b = val(bv);
    if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1) {
        throw DimensionError("affine expects x[B,I], W[I,O], b[O]; got x" + shape_str(x.shape) +
                             " W" + shape_str(w.shape) + " b" + shape_str(b.shape));
    }
    const std::int64_t B = x.shape[0], I = x.shape[1], O = w.shape[1];
    if (w.shape[0] != I || b.shape[0] != O) {
        throw DimensionError("affine shape mismatch: x" + shape_str(x.shape) + " vs W" +
                             shape_str(w.shape) + " b" + shape_str(b.shape));
    }
    Tensor y = Tensor::zeros({B, O});
    for (std::int64_t r = 0; r < B; ++r) {
        const double* xr = x.data.data() + r * I;
        double* yr = y.data.data() + r * O;
        for (std::int64_t o = 0; o < O; ++o) yr[o] = b.data[std::size_t(o)];
        for (std::int64_t i = 0; i < I; ++i) {
            const double xv_ = xr[i];
            if (xv_ == 0.0) continue;
            const double* wrow = w.data.data() + i * O;
            for (std::int64_t o = 0; o < O; ++o) yr[o] += xv_ * wrow[o];
        }
    }
    const bool ng = needs(xv.id) || needs(wv.id) || needs(bv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id, wv.id, bv.id}, out, "affine", [xv, wv, bv, out, B, I, O](Tape& t) {
        const auto& g = t.slot(out).grad;
        const Tensor& x = t.slot(xv.id).value;
        const Tensor& w = t.slot(wv.id).value;
        if (t.needs(xv.id)) {
            auto& gx = t.grad_buf(xv.id);
            for (std::int64_t r = 0; r < B; ++r) {
                for (std::int64_t i = 0; i < I; ++i) {
                    double acc = 0.0;
                    const double* wrow = w.data.data() + i * O;
                    const double* grow = g.data() + r * O;
                    for (std::int64_t o = 0; o < O; ++o) acc += grow[o] * wrow[o];
                    gx[std::size_t(r * I + i)] += acc;
                }
            }
        }
        if (t.needs(wv.id)) {
            auto& gw = t.grad_buf(wv.id);
            for (std::int64_t r = 0; r < B; ++r) {
                const double* xr = x.data.data() + r * I;
                const double* grow = g.data() + r * O;
                for (std::int64_t i = 0; i < I; ++i) {
                    const double xv_ = xr[i];
                    if (xv_ == 0.0) continue;
                    double* gwrow = gw.data() + i * O;
                    for (std::int64_t o = 0; o < O; ++o) gwrow[o] += xv_ * grow[o];
                }
            }
        }
        if (t.needs(bv.id)) {
            auto& gb = t.grad_buf(bv.id);
            for (std::int64_t r = 0; r < B; ++r) {
                const double* grow = g.data() + r * O;
                for (std::int64_t o = 0; o < O; ++o) gb[std::size_t(o)] += grow[o];
            }
        }
    });
    return Var{out};
}

Var Tape::conv2d(Var xv, Var kv, std::int64_t stride, std::int64_t pad) {
    const Tensor& x = val(xv);
    const Tensor& k = val(kv);
    if (x.ndim() != 4 || k.ndim() != 4) {
        throw DimensionError("conv2d expects x[B,C,H,W] and k[F,C,kh,kw]; got x" +
                             shape_str(x.shape) + " k" + shape_str(k.shape));
    }
    if (stride < 1) throw ContractError("conv2d stride must be >= 1");
    if (pad < 0) throw ContractError("conv2d pad must be >= 0");
    const std::int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t F = k.shape[0], KH = k.shape[2], KW = k.shape[3];
    if (k.shape[1] != C) {
        throw DimensionError("conv2d channel mismatch: x" + shape_str(x.shape) + " vs k" +
                             shape_str(k.shape));
    }
    if (KH > H + 2 * pad || KW > W + 2 * pad) {
        throw DimensionError("conv2d kernel " + shape_str(k.shape) + " larger than padded input " +
                             shape_str({B, C, H + 2 * pad, W + 2 * pad}));
    }
    const std::int64_t Ho = conv_out_dim(H, KH, stride, pad);
    const std::int64_t Wo = conv_out_dim(W, KW, stride, pad);
    const std::int64_t Hp = H + 2 * pad, Wp = W + 2 * pad;

    auto xpad = std::make_shared<std::vector<double>>(pad_nchw(x, pad));
    Tensor y = Tensor::zeros({B, F, Ho, Wo});
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t f = 0; f < F; ++f) {
            double* yb = y.data.data() + ((b * F + f) * Ho) * Wo;
            for (std::int64_t c = 0; c < C; ++c) {
                const double* xc = xpad->data() + ((b * C + c) * Hp) * Wp;
                const double* kc = k.data.data() + ((f * C + c) * KH) * KW;
                for (std::int64_t ho = 0; ho < Ho; ++ho) {
                    const std::int64_t hi = ho * stride;
                    double* yrow = yb + ho * Wo;
                    for (std::int64_t kh = 0; kh < KH; ++kh) {
                        const double* xrow = xc + (hi + kh) * Wp;
                        const double* krow = kc + kh * KW;
                        for (std::int64_t wo = 0; wo < Wo; ++wo) {
                            const double* xp = xrow + wo * stride;
                            double acc = 0.0;
                            for (std::int64_t kw = 0; kw < KW; ++kw) acc += xp[kw] * krow[kw];
                            yrow[wo] += acc;
                        }
                    }
                }
            }
        }
    }
    const bool ng = needs(xv.id) || needs(kv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id, kv.id}, out, "conv2d",
           [xv, kv, out, xpad, stride, pad, B, C, H, W, F, KH, KW, Ho, Wo, Hp, Wp](Tape& t) {
               const auto& g = t.slot(out).grad;
               const Tensor& k = t.slot(kv.id).value;
               if (t.needs(kv.id)) {
                   auto& gk = t.grad_buf(kv.id);
                   for (std::int64_t b = 0; b < B; ++b) {
                       for (std::int64_t f = 0; f < F; ++f) {
                           const double* gb = g.data() + ((b * F + f) * Ho) * Wo;
                           for (std::int64_t c = 0; c < C; ++c) {
                               const double* xc = xpad->data() + ((b * C + c) * Hp) * Wp;
                               double* gkc = gk.data() + ((f * C + c) * KH) * KW;
                               for (std::int64_t ho = 0; ho < Ho; ++ho) {
                                   const std::int64_t hi = ho * stride;
                                   const double* grow = gb + ho * Wo;
                                   for (std::int64_t kh = 0; kh < KH; ++kh) {
                                       const double* xrow = xc + (hi + kh) * Wp;
                                       double* gkrow = gkc + kh * KW;
                                       for (std::int64_t wo = 0; wo < Wo; ++wo) {
                                           const double gv = grow[wo];
                                           if (gv == 0.0) continue;
                                           const double* xp = xrow + wo * stride;
                                           for (std::int64_t kw = 0; kw < KW; ++kw) {
                                               gkrow[kw] += gv * xp[kw];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   }
               }
               if (t.needs(xv.id)) {
                   std::vector<double> gxp(std::size_t(B * C * Hp * Wp), 0.0);
                   for (std::int64_t b = 0; b < B; ++b) {
                       for (std::int64_t f = 0; f < F; ++f) {
                           const double* gb = g.data() + ((b * F + f) * Ho) * Wo;
                           for (std::int64_t c = 0; c < C; ++c) {
                               double* xc = gxp.data() + ((b * C + c) * Hp) * Wp;
                               const double* kc = k.data.data() + ((f * C + c) * KH) * KW;
                               for (std::int64_t ho = 0; ho < Ho; ++ho) {
                                   const std::int64_t hi = ho * stride;
                                   const double* grow = gb + ho * Wo;
                                   for (std::int64_t kh = 0; kh < KH; ++kh) {
                                       double* xrow = xc + (hi + kh) * Wp;
                                       const double* krow = kc + kh * KW;
                                       for (std::int64_t wo = 0; wo < Wo; ++wo) {
                                           const double gv = grow[wo];
                                           if (gv == 0.0) continue;
                                           double* xp = xrow + wo * stride;
                                           for (std::int64_t kw = 0; kw < KW; ++kw) {
                                               xp[kw] += gv * krow[kw];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   }
                   auto& gx = t.grad_buf(xv.id);
                   for (std::int64_t b = 0; b < B; ++b) {
                       for (std::int64_t c = 0; c < C; ++c) {
                           for (std::int64_t h = 0; h < H; ++h) {
                               const double* src = gxp.data() + (((b * C + c) * Hp + h + pad) * Wp + pad);
                               double* dst = gx.data() + ((b * C + c) * H + h) * W;
                               for (std::int64_t w = 0; w < W; ++w) dst[w] += src[w];
                           }
                       }
                   }
               }
           });
    return Var{out};
}

Var Tape::bias_channels(Var xv, Var bv) {
    const Tensor& x = val(xv);
    const Tensor& b = val(bv);
    if (x.ndim() != 4 || b.ndim() != 1 || b.shape[0] != x.shape[1]) {
        throw DimensionError("bias_channels expects x[B,F,H,W] and b[F]; got x" +
                             shape_str(x.shape) + " b" + shape_str(b.shape));
    }
    const std::int64_t B = x.shape[0], F = x.shape[1], HW = x.shape[2] * x.shape[3];
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (std::int64_t bi = 0; bi < B; ++bi) {
        for (std::int64_t f = 0; f < F; ++f) {
            double* p = y.data.data() + (bi * F + f) * HW;
            const double bb = b.data[std::size_t(f)];
            for (std::int64_t i = 0; i < HW; ++i) p[i] += bb;
        }
    }
    const bool ng = needs(xv.id) || needs(bv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id, bv.id}, out, "bias_channels", [xv, bv, out, B, F, HW](Tape& t) {
        const auto& g = t.slot(out).grad;
        if (t.needs(xv.id)) {
            auto& gx = t.grad_buf(xv.id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.needs(bv.id)) {
            auto& gb = t.grad_buf(bv.id);
            for (std::int64_t bi = 0; bi < B; ++bi) {
                for (std::int64_t f = 0; f < F; ++f) {
                    const double* p = g.data() + (bi * F + f) * HW;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < HW; ++i) acc += p[i];
                    gb[std::size_t(f)] += acc;
                }
            }
        }
    });
    return Var{out};
}

Var Tape::maxpool2d(Var xv, std::int64_t size, std::int64_t stride) {
    const Tensor& x = val(xv);
    if (x.ndim() != 4) {
        throw DimensionError("maxpool2d expects x[B,C,H,W], got " + shape_str(x.shape));
    }
    if (size < 1 || stride < 1) throw ContractError("maxpool2d size and stride must be >= 1");
    const std::int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (size > H || size > W) {
        throw DimensionError("maxpool2d window " + std::to_string(size) +
                             " exceeds spatial dims of " + shape_str(x.shape));
    }
    const std::int64_t Ho = (H - size) / stride + 1;
    const std::int64_t Wo = (W - size) / stride + 1;
    Tensor y = Tensor::zeros({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(std::size_t(B * C * Ho * Wo));
    std::int64_t oi = 0;
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* xc = x.data.data() + ((b * C + c) * H) * W;
            for (std::int64_t ho = 0; ho < Ho; ++ho) {
                for (std::int64_t wo = 0; wo < Wo; ++wo, ++oi) {
                    const std::int64_t h0 = ho * stride, w0 = wo * stride;
                    double best = xc[h0 * W + w0];
                    std::int64_t best_at = h0 * W + w0;
                    // ties keep the first position in row-major scan order
                    for (std::int64_t dh = 0; dh < size; ++dh) {
                        for (std::int64_t dw = 0; dw < size; ++dw) {
                            const std::int64_t at = (h0 + dh) * W + (w0 + dw);
                            if (xc[at] > best) {
                                best = xc[at];
                                best_at = at;
                            }
                        }
                    }
                    y.data[std::size_t(oi)] = best;
                    (*argmax)[std::size_t(oi)] = ((b * C + c) * H) * W + best_at;
                }
            }
        }
    }
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "maxpool2d", [xv, out, argmax](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        auto& gx = t.grad_buf(xv.id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[std::size_t((*argmax)[i])] += g[i];
    });
    return Var{out};
}

Var Tape::relu(Var xv) {
    const Tensor& x = val(xv);
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "relu", [xv, out](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        const Tensor& x = t.slot(xv.id).value;
        auto& gx = t.grad_buf(xv.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x.data[i] > 0.0) gx[i] += g[i];  // subgradient 0 at exactly 0
        }
    });
    return Var{out};
}

Var Tape::flatten_rows(Var xv) {
    const Tensor& x = val(xv);
    if (x.ndim() < 2) {
        throw DimensionError("flatten_rows expects rank >= 2, got " + shape_str(x.shape));
    }
    const std::int64_t B = x.shape[0];
    Tensor y(Shape{B, x.size() / B}, x.data);
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "flatten", [xv, out](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        auto& gx = t.grad_buf(xv.id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return Var{out};
}

Tape::SoftmaxResult Tape::softmax_xent(Var logitsv, const std::vector<std::int64_t>& labels) {
    const Tensor& z = val(logitsv);
    if (z.ndim() != 2) {
        throw DimensionError("softmax_xent expects logits[B,C], got " + shape_str(z.shape));
    }
    const std::int64_t B = z.shape[0], C = z.shape[1];
    if (static_cast<std::int64_t>(labels.size()) != B) {
        throw DimensionError("softmax_xent got " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(B));
    }
    for (std::int64_t b = 0; b < B; ++b) {
        if (labels[std::size_t(b)] < 0 || labels[std::size_t(b)] >= C) {
            throw IndexError("label " + std::to_string(labels[std::size_t(b)]) + " at row " +
                             std::to_string(b) + " outside [0," + std::to_string(C) + ")");
        }
    }
    Tensor probs = Tensor::zeros({B, C});
    double loss = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = z.data.data() + b * C;
        double mx = row[0];
        for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        double* prow = probs.data.data() + b * C;
        for (std::int64_t c = 0; c < C; ++c) {
            prow[c] = std::exp(row[c] - mx);
            sum += prow[c];
        }
        for (std::int64_t c = 0; c < C; ++c) prow[c] /= sum;
        loss += std::log(sum) - (row[labels[std::size_t(b)]] - mx);
    }
    loss /= static_cast<double>(B);

    const bool ng = needs(logitsv.id);
    int out = push_slot(Tensor::scalar(loss), ng);
    Tensor probs_copy = probs;
    record({logitsv.id}, out, "softmax_xent",
           [logitsv, out, probs = std::move(probs_copy), labels, B, C](Tape& t) {
               if (!t.needs(logitsv.id)) return;
               const double g = t.slot(out).grad[0];
               auto& gz = t.grad_buf(logitsv.id);
               const double invb = 1.0 / static_cast<double>(B);
               for (std::int64_t b = 0; b < B; ++b) {
                   const double* prow = probs.data.data() + b * C;
                   double* grow = gz.data() + b * C;
                   for (std::int64_t c = 0; c < C; ++c) {
                       double d = prow[c];
                       if (c == labels[std::size_t(b)]) d -= 1.0;
                       grow[c] += g * d * invb;
                   }
               }
           });
    return SoftmaxResult{Var{out}, std::move(probs)};
}

Var Tape::l2_normalize_rows(Var xv) {
    const Tensor& x = val(xv);
    if (x.ndim() != 2) {
        throw DimensionError("l2_normalize_rows expects x[B,D], got " + shape_str(x.shape));
    }
    const std::int64_t B = x.shape[0], D = x.shape[1];
    constexpr double guard = 1e-12;
    Tensor y = Tensor::zeros({B, D});
    auto norms = std::make_shared<std::vector<double>>(std::size_t(B));
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        double s = 0.0;
        for (std::int64_t d = 0; d < D; ++d) s += row[d] * row[d];
        const double n = std::sqrt(s);
        (*norms)[std::size_t(b)] = n;
        const double inv = 1.0 / std::max(n, guard);
        double* yr = y.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) yr[d] = row[d] * inv;
    }
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "l2norm", [xv, out, norms, B, D](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        const Tensor& y = t.slot(out).value;
        auto& gx = t.grad_buf(xv.id);
        for (std::int64_t b = 0; b < B; ++b) {
            const double n = (*norms)[std::size_t(b)];
            if (n <= 1e-12) continue;  // guarded rows: zero subgradient, no noise blow-up
            const double* gr = g.data() + b * D;
            const double* yr = y.data.data() + b * D;
            double dot = 0.0;
            for (std::int64_t d = 0; d < D; ++d) dot += gr[d] * yr[d];
            double* gxr = gx.data() + b * D;
            for (std::int64_t d = 0; d < D; ++d) gxr[d] += (gr[d] - yr[d] * dot) / n;
        }
    });
    return Var{out};
}

Tape::StandardizeResult Tape::standardize_batch(Var xv) {
    const Tensor& x = val(xv);
    if (x.ndim() != 2) {
        throw DimensionError("standardize_batch expects x[B,D], got " + shape_str(x.shape));
    }
    const std::int64_t B = x.shape[0], D = x.shape[1];
    if (B < 2) throw ContractError("standardize_batch needs batch >= 2 in train mode");
    std::vector<double> mean(std::size_t(D), 0.0), var(std::size_t(D), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) mean[std::size_t(d)] += row[d];
    }
    const double invb = 1.0 / static_cast<double>(B);
    for (auto& m : mean) m *= invb;
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) {
            const double c = row[d] - mean[std::size_t(d)];
            var[std::size_t(d)] += c * c;
        }
    }
    for (auto& v : var) v *= invb;  // biased

    auto invstd = std::make_shared<std::vector<double>>(std::size_t(D));
    for (std::int64_t d = 0; d < D; ++d) {
        (*invstd)[std::size_t(d)] = 1.0 / std::sqrt(var[std::size_t(d)] + kStandardizeEps);
    }
    Tensor y = Tensor::zeros({B, D});
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        double* yr = y.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) {
            yr[d] = (row[d] - mean[std::size_t(d)]) * (*invstd)[std::size_t(d)];
        }
    }
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "standardize_batch", [xv, out, invstd, B, D](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        const Tensor& xhat = t.slot(out).value;
        auto& gx = t.grad_buf(xv.id);
        const double m = static_cast<double>(B);
        for (std::int64_t d = 0; d < D; ++d) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t b = 0; b < B; ++b) {
                const double dy = g[std::size_t(b * D + d)];
                sum_dy += dy;
                sum_dy_xhat += dy * xhat.data[std::size_t(b * D + d)];
            }
            const double is = (*invstd)[std::size_t(d)];
            for (std::int64_t b = 0; b < B; ++b) {
                const std::size_t at = std::size_t(b * D + d);
                gx[at] += (is / m) * (m * g[at] - sum_dy - xhat.data[at] * sum_dy_xhat);
            }
        }
    });
    return StandardizeResult{Var{out}, std::move(mean), std::move(var)};
}

Var Tape::standardize_fixed(Var xv, const std::vector<double>& mean,
                            const std::vector<double>& var) {
    const Tensor& x = val(xv);
    if (x.ndim() != 2) {
        throw DimensionError("standardize_fixed expects x[B,D], got " + shape_str(x.shape));
    }
    const std::int64_t B = x.shape[0], D = x.shape[1];
    if (static_cast<std::int64_t>(mean.size()) != D || static_cast<std::int64_t>(var.size()) != D) {
        throw DimensionError("standardize_fixed stats length mismatch for x" + shape_str(x.shape));
    }
    auto invstd = std::make_shared<std::vector<double>>(std::size_t(D));
    for (std::int64_t d = 0; d < D; ++d) {
        (*invstd)[std::size_t(d)] = 1.0 / std::sqrt(var[std::size_t(d)] + kStandardizeEps);
    }
    Tensor y = Tensor::zeros({B, D});
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        double* yr = y.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) {
            yr[d] = (row[d] - mean[std::size_t(d)]) * (*invstd)[std::size_t(d)];
        }
    }
    const bool ng = needs(xv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id}, out, "standardize_fixed", [xv, out, invstd, B, D](Tape& t) {
        if (!t.needs(xv.id)) return;
        const auto& g = t.slot(out).grad;
        auto& gx = t.grad_buf(xv.id);
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t d = 0; d < D; ++d) {
                const std::size_t at = std::size_t(b * D + d);
                gx[at] += g[at] * (*invstd)[std::size_t(d)];
            }
        }
    });
    return Var{out};
}

Var Tape::scale_features(Var xv, Var gv, Var bv) {
    const Tensor& x = val(xv);
    const Tensor& gamma = val(gv);
    const Tensor& beta = val(bv);
    const std::int64_t B = x.shape[0], D = x.ndim() == 2 ? x.shape[1] : -1;
    if (x.ndim() != 2 || gamma.shape != Shape{D} || beta.shape != Shape{D}) {
        throw DimensionError("scale_features expects x[B,D], gamma[D], beta[D]; got x" +
                             shape_str(x.shape) + " gamma" + shape_str(gamma.shape) + " beta" +
                             shape_str(beta.shape));
    }
    Tensor y = Tensor::zeros({B, D});
    for (std::int64_t b = 0; b < B; ++b) {
        const double* row = x.data.data() + b * D;
        double* yr = y.data.data() + b * D;
        for (std::int64_t d = 0; d < D; ++d) {
            yr[d] = row[d] * gamma.data[std::size_t(d)] + beta.data[std::size_t(d)];
        }
    }
    const bool ng = needs(xv.id) || needs(gv.id) || needs(bv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id, gv.id, bv.id}, out, "scale_features", [xv, gv, bv, out, B, D](Tape& t) {
        const auto& g = t.slot(out).grad;
        const Tensor& x = t.slot(xv.id).value;
        const Tensor& gamma = t.slot(gv.id).value;
        if (t.needs(xv.id)) {
            auto& gx = t.grad_buf(xv.id);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t d = 0; d < D; ++d) {
                    const std::size_t at = std::size_t(b * D + d);
                    gx[at] += g[at] * gamma.data[std::size_t(d)];
                }
            }
        }
        if (t.needs(gv.id)) {
            auto& gg = t.grad_buf(gv.id);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t d = 0; d < D; ++d) {
                    const std::size_t at = std::size_t(b * D + d);
                    gg[std::size_t(d)] += g[at] * x.data[at];
                }
            }
        }
        if (t.needs(bv.id)) {
            auto& gb = t.grad_buf(bv.id);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t d = 0; d < D; ++d) {
                    gb[std::size_t(d)] += g[std::size_t(b * D + d)];
                }
            }
        }
    });
    return Var{out};
}

Var Tape::scale_uniform(Var xv, Var gv) {
    const Tensor& x = val(xv);
    const Tensor& gamma = val(gv);
    if (gamma.size() != 1) {
        throw DimensionError("scale_uniform expects a single scalar gamma, got " +
                             shape_str(gamma.shape));
    }
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    const double gval = gamma.data[0];
    for (auto& v : y.data) v *= gval;
    const bool ng = needs(xv.id) || needs(gv.id);
    int out = push_slot(std::move(y), ng);
    record({xv.id, gv.id}, out, "scale_uniform", [xv, gv, out](Tape& t) {
        const auto& g = t.slot(out).grad;
        const Tensor& x = t.slot(xv.id).value;
        const double gval = t.slot(gv.id).value.data[0];
        if (t.needs(xv.id)) {
            auto& gx = t.grad_buf(xv.id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gval;
        }
        if (t.needs(gv.id)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.data[i];
            t.grad_buf(gv.id)[0] += acc;
        }
    });
    return Var{out};
}

Var Tape::add(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    if (a.shape != b.shape) {
        throw DimensionError("add shape mismatch: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    Tensor y = a;
    y.requires_grad = false;
    y.grad.clear();
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
    const bool ng = needs(av.id) || needs(bv.id);
    int out = push_slot(std::move(y), ng);
    record({av.id, bv.id}, out, "add", [av, bv, out](Tape& t) {
        const auto& g = t.slot(out).grad;
        if (t.needs(av.id)) {
            auto& ga = t.grad_buf(av.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs(bv.id)) {
            auto& gb = t.grad_buf(bv.id);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return Var{out};
}

Var Tape::mul(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    if (a.shape != b.shape) {
        throw DimensionError("mul shape mismatch: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    Tensor y = a;
    y.requires_grad = false;
    y.grad.clear();
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.data[i];
    const bool ng = needs(av.id) || needs(bv.id);
    int out = push_slot(std::move(y), ng);
    record({av.id, bv.id}, out, "mul", [av, bv, out](Tape& t) {
        const auto& g = t.slot(out).grad;
        const Tensor& a = t.slot(av.id).value;
        const Tensor& b = t.slot(bv.id).value;
        if (t.needs(av.id)) {
            auto& ga = t.grad_buf(av.id);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data[i];
        }
        if (t.needs(bv.id)) {
            auto& gb = t.grad_buf(bv.id);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data[i];
        }
    });
    return Var{out};
}

Var Tape::scale_const(Var av, double c) {
    const Tensor& a = val(av);
    Tensor y = a;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v *= c;
    const bool ng = needs(av.id);
    int out = push_slot(std::move(y), ng);
    record({av.id}, out, "scale_const", [av, out, c](Tape& t) {
        if (!t.needs(av.id)) return;
        const auto& g = t.slot(out).grad;
        auto& ga = t.grad_buf(av.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
    return Var{out};
}

Var Tape::square(Var av) {
    const Tensor& a = val(av);
    Tensor y = a;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v *= v;
    const bool ng = needs(av.id);
    int out = push_slot(std::move(y), ng);
    record({av.id}, out, "square", [av, out](Tape& t) {
        if (!t.needs(av.id)) return;
        const auto& g = t.slot(out).grad;
        const Tensor& a = t.slot(av.id).value;
        auto& ga = t.grad_buf(av.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a.data[i] * g[i];
    });
    return Var{out};
}

Var Tape::sum_all(Var av) {
    const Tensor& a = val(av);
    double s = 0.0;
    for (double v : a.data) s += v;
    const bool ng = needs(av.id);
    int out = push_slot(Tensor::scalar(s), ng);
    record({av.id}, out, "sum", [av, out](Tape& t) {
        if (!t.needs(av.id)) return;
        const double g = t.slot(out).grad[0];
        auto& ga = t.grad_buf(av.id);
        for (auto& v : ga) v += g;
    });
    return Var{out};
}

}  // namespace tln
