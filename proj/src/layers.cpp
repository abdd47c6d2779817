#include "tln/layers.hpp"

#include <cmath>

#include "tln/error.hpp"

namespace tln {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::FC: return "fc";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::ReLU: return "relu";
        case LayerKind::L2Norm: return "l2norm";
        case LayerKind::BatchStd: return "batchstd";
        case LayerKind::Scale: return "scale";
        case LayerKind::SoftmaxHead: return "softmax";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (LayerKind k : {LayerKind::Conv, LayerKind::FC, LayerKind::MaxPool, LayerKind::ReLU,
                        LayerKind::L2Norm, LayerKind::BatchStd, LayerKind::Scale,
                        LayerKind::SoftmaxHead}) {
        if (name == layer_kind_name(k)) return k;
    }
    throw DataError("unknown layer kind '" + name + "'");
}

namespace {

std::int64_t flat_dim(const Shape& in) {
    std::int64_t d = 1;
    for (auto v : in) d *= v;
    return d;
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
    switch (spec.kind) {
        case LayerKind::Conv: {
            if (in.size() != 3) {
                throw DimensionError("layer '" + spec.name + "' (conv) expects [C,H,W] input, got " +
                                     shape_str(in));
            }
            const std::int64_t h = (in[1] + 2 * spec.pad - spec.kernel) / spec.stride + 1;
            const std::int64_t w = (in[2] + 2 * spec.pad - spec.kernel) / spec.stride + 1;
            if (h <= 0 || w <= 0) {
                throw DimensionError("layer '" + spec.name + "' output collapses on input " +
                                     shape_str(in));
            }
            return {spec.units, h, w};
        }
        case LayerKind::MaxPool: {
            if (in.size() != 3) {
                throw DimensionError("layer '" + spec.name + "' (maxpool) expects [C,H,W] input, got " +
                                     shape_str(in));
            }
            return {in[0], (in[1] - spec.kernel) / spec.stride + 1,
                    (in[2] - spec.kernel) / spec.stride + 1};
        }
        case LayerKind::FC:
            return {spec.units};
        case LayerKind::ReLU:
        case LayerKind::SoftmaxHead:
            return in;
        case LayerKind::L2Norm:
        case LayerKind::BatchStd:
        case LayerKind::Scale:
            return {flat_dim(in)};
    }
    return in;
}

Layer make_layer(LayerSpec spec, const Shape& in, Rng& rng) {
    Layer layer;
    switch (spec.kind) {
        case LayerKind::Conv: {
            if (in.size() != 3) {
                throw DimensionError("layer '" + spec.name + "' (conv) expects [C,H,W] input, got " +
                                     shape_str(in));
            }
            if (spec.units < 1 || spec.kernel < 1) {
                throw ContractError("layer '" + spec.name + "' needs positive channels and kernel");
            }
            const std::int64_t fan_in = in[0] * spec.kernel * spec.kernel;
            const double bound = std::sqrt(6.0 / double(fan_in));
            layer.params.weight =
                uniform_tensor({spec.units, in[0], spec.kernel, spec.kernel}, bound, rng);
            layer.params.bias = Tensor::zeros({spec.units});
            break;
        }
        case LayerKind::FC: {
            const std::int64_t fan_in = flat_dim(in);
            if (spec.units < 1) throw ContractError("layer '" + spec.name + "' needs positive width");
            const double bound = spec.classifier_init
                                     ? std::sqrt(6.0 / double(fan_in + spec.units))
                                     : std::sqrt(6.0 / double(fan_in));
            layer.params.weight = uniform_tensor({fan_in, spec.units}, bound, rng);
            layer.params.bias = Tensor::zeros({spec.units});
            break;
        }
        case LayerKind::Scale: {
            const std::int64_t d = flat_dim(in);
            if (spec.units != 1 && spec.units != d) {
                throw DimensionError("layer '" + spec.name + "' scale width " +
                                     std::to_string(spec.units) + " does not match input " +
                                     shape_str(in));
            }
            if (spec.units != 1 && !spec.with_shift) {
                throw ContractError("layer '" + spec.name +
                                    "': per-feature scale is used with a shift");
            }
            layer.params.gamma = Tensor::full({spec.units}, 1.0);
            if (spec.with_shift) layer.params.beta = Tensor::zeros({spec.units});
            break;
        }
        case LayerKind::BatchStd: {
            const std::int64_t d = flat_dim(in);
            layer.params.running_mean = Tensor::zeros({d});
            layer.params.running_var = Tensor::full({d}, 1.0);
            break;
        }
        case LayerKind::MaxPool:
            if (spec.kernel < 1) throw ContractError("layer '" + spec.name + "' needs a window");
            break;
        case LayerKind::ReLU:
        case LayerKind::L2Norm:
        case LayerKind::SoftmaxHead:
            break;
    }
    layer.spec = std::move(spec);
    return layer;
}

namespace {

Var as_rows(Tape& tape, Var x) {
    return tape.val(x).ndim() == 2 ? x : tape.flatten_rows(x);
}

}  // namespace

Var forward_layer(Layer& layer, Tape& tape, Var x, Mode mode) {
    const Shape in_shape = tape.val(x).shape;
    try {
        switch (layer.spec.kind) {
            case LayerKind::Conv: {
                Var y = tape.conv2d(x, tape.param(layer.params.weight), layer.spec.stride,
                                    layer.spec.pad);
                return tape.bias_channels(y, tape.param(layer.params.bias));
            }
            case LayerKind::FC:
                return tape.affine(as_rows(tape, x), tape.param(layer.params.weight),
                                   tape.param(layer.params.bias));
            case LayerKind::MaxPool:
                return tape.maxpool2d(x, layer.spec.kernel, layer.spec.stride);
            case LayerKind::ReLU:
                return tape.relu(x);
            case LayerKind::L2Norm:
                return tape.l2_normalize_rows(as_rows(tape, x));
            case LayerKind::BatchStd: {
                Var rows = as_rows(tape, x);
                if (mode == Mode::Train) {
                    auto r = tape.standardize_batch(rows);
                    auto& rm = layer.params.running_mean.data;
                    auto& rv = layer.params.running_var.data;
                    for (std::size_t i = 0; i < rm.size(); ++i) {
                        rm[i] = (1.0 - kRunningStatMomentum) * rm[i] + kRunningStatMomentum * r.mean[i];
                        rv[i] = (1.0 - kRunningStatMomentum) * rv[i] + kRunningStatMomentum * r.var[i];
                    }
                    return r.y;
                }
                return tape.standardize_fixed(rows, layer.params.running_mean.data,
                                              layer.params.running_var.data);
            }
            case LayerKind::Scale: {
                Var rows = as_rows(tape, x);
                if (layer.spec.units == 1) {
                    return tape.scale_uniform(rows, tape.param(layer.params.gamma));
                }
                return tape.scale_features(rows, tape.param(layer.params.gamma),
                                           tape.param(layer.params.beta));
            }
            case LayerKind::SoftmaxHead:
                // probabilities are materialized by the loss during training or
                // by a plain row softmax on extracted features; argmax is
                // unaffected, so forward is the identity
                return x;
        }
    } catch (const DimensionError& e) {
        throw DimensionError("layer '" + layer.spec.name + "' on input " + shape_str(in_shape) +
                             ": " + e.what());
    }
    return x;
}

std::vector<Tensor*> layer_params(Layer& layer) {
    std::vector<Tensor*> out;
    auto push = [&out](Tensor& t) {
        if (t.size() > 0) out.push_back(&t);
    };
    switch (layer.spec.kind) {
        case LayerKind::Conv:
        case LayerKind::FC:
            push(layer.params.weight);
            push(layer.params.bias);
            break;
        case LayerKind::Scale:
            push(layer.params.gamma);
            push(layer.params.beta);
            break;
        default:
            break;
    }
    return out;
}

}  // namespace tln
