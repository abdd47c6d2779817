#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tln/layers.hpp"
#include "tln/notation.hpp"

namespace tln {

// One transferable/freezable unit: a conv layer (or block) with its
// activation and pooling, an FC layer, or an appended norm+scale+FC stack.
struct Unit {
    std::string name;
    std::vector<Layer> layers;
    bool pretrained = false;
};

struct NetworkMeta {
    std::string source_id;
    std::int64_t class_count = 0;          // width of the classification layer L_N
    std::string unit_granularity = "layer";  // "layer" (AlexNet-style) or "block" (VGG-style)
    Shape input_shape;                     // per-sample [C,H,W]
};

// Source network chi_N: N transferable units whose last unit is the
// pretrained FC classification layer L_N.
struct PretrainedNetwork {
    std::vector<Unit> units;
    NetworkMeta meta;

    std::int64_t depth() const { return static_cast<std::int64_t>(units.size()); }
    void validate() const;
};

// Which units train, and at what learning-rate multiplier. Trainable flags
// are a suffix (unit i trains iff i >= nu, 1-based); psi always trains.
struct FreezePlan {
    std::vector<bool> trainable;
    std::vector<double> lr_mult;  // 1.0 pretrained units, 10.0 appended ones
    std::int64_t nu = 1;
    double psi_lr_mult = 10.0;
};

// A transfer-learning network: sliced pretrained prefix, optional appended
// depth units, and the new classification module psi (FC + softmax head).
struct Tln {
    std::vector<Unit> units;
    std::vector<Layer> psi;
    NetworkMeta meta;
    bool retains_source_classifier = false;  // kappa == N

    std::int64_t total_units() const { return static_cast<std::int64_t>(units.size()); }
    // Per-sample output shape after the last unit (before psi).
    Shape top_shape() const;

    // Forward through all units and psi. A plan, when given, runs frozen
    // BatchStd layers in eval mode so their running stats stay untouched.
    Var forward(Tape& tape, Var x, Mode mode, const FreezePlan* plan = nullptr);
    // Forward through the first `count` units only.
    Var forward_units(Tape& tape, Var x, std::int64_t count, Mode mode,
                      const FreezePlan* plan = nullptr);
    // Forward until just after the named layer; throws listing known names.
    Var forward_to(Tape& tape, Var x, const std::string& layer_name, Mode mode);

    std::vector<std::string> layer_names() const;
    void validate() const;
};

// First kappa units of chi with parameters copied. kappa = N keeps the
// pretrained classifier, kappa = N-1 drops it (traditional fine-tuning).
Tln slice(const PretrainedNetwork& chi, std::int64_t kappa);

// Appends psi = FC(feature_dim -> target_classes) + softmax head.
void append_classifier(Tln& net, std::int64_t target_classes, Rng& rng);

// Appends one [Norm -> Scale -> FC(s) -> ReLU] unit per size on top of the
// retained classification layer.
void augment_depth(Tln& net, const std::vector<std::int64_t>& sizes, NormScheme norm, Rng& rng);

FreezePlan make_freeze_plan(const Tln& net, std::int64_t nu);

// Sets requires_grad on every parameter tensor according to the plan.
void apply_freeze_plan(Tln& net, const FreezePlan& plan);

// Builds the full TLN for a config against a source network; `seed` drives
// the initialization of all new layers.
Tln instantiate(const PretrainedNetwork& chi, const TlnConfig& config, std::uint64_t seed);

// Fresh random parameters for every layer, topology unchanged (the
// random-initialization baseline).
void reinitialize(Tln& net, Rng& rng);

// Walks all learnable parameter tensors in deterministic order.
// unit_index is -1 for psi parameters.
void for_each_param(Tln& net, const std::function<void(Tensor&, std::int64_t unit_index)>& fn);

// Toy source networks pretrainable at desk scale.
//   toy8:   conv1..conv5 + fc6 + fc7 + L_N   (AlexNet-style, granularity "layer")
//   toy4:   conv1, conv2, fc3, L_N
//   block8: 5 two-conv blocks + fc6 + fc7 + L_N (VGG-style, granularity "block")
PretrainedNetwork build_source_network(const std::string& arch, const Shape& input_shape,
                                       std::int64_t classes, Rng& rng);

}  // namespace tln
