#pragma once

#include <string>
#include <vector>

#include "tln/rng.hpp"
#include "tln/tape.hpp"
#include "tln/tensor.hpp"

namespace tln {

enum class LayerKind { Conv, FC, MaxPool, ReLU, L2Norm, BatchStd, Scale, SoftmaxHead };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::string name;
    std::int64_t units = 0;   // Conv: out channels; FC: out features; Scale: width (1 = scalar)
    std::int64_t kernel = 0;  // Conv/MaxPool window
    std::int64_t stride = 1;
    std::int64_t pad = 0;
    bool classifier_init = false;  // FC: Glorot-uniform instead of He-uniform
    bool with_shift = false;       // Scale: learn a shift beta as well

    bool operator==(const LayerSpec&) const = default;
};

struct Parameters {
    Tensor weight, bias;                // Conv/FC
    Tensor gamma, beta;                 // Scale
    Tensor running_mean, running_var;   // BatchStd state (not learnable)
};

struct Layer {
    LayerSpec spec;
    Parameters params;
};

// Output shape for a single sample ([C,H,W] or [D]).
Shape layer_output_shape(const LayerSpec& spec, const Shape& in);

// He-uniform fan-in init for Conv/FC feeding a ReLU, Glorot-uniform for
// classifier FCs, gamma = 1, beta = 0, running stats (0,1), biases zero.
// Deterministic given the generator state.
Layer make_layer(LayerSpec spec, const Shape& in, Rng& rng);

// Runs the layer on a batched input. `mode` only affects BatchStd: batch
// statistics (and a running-stat update with momentum 0.1) in Train, running
// statistics in Eval.
Var forward_layer(Layer& layer, Tape& tape, Var x, Mode mode);

// Learnable tensors of the layer (running stats excluded).
std::vector<Tensor*> layer_params(Layer& layer);

inline constexpr double kRunningStatMomentum = 0.1;

}  // namespace tln
