#include "tln/network.hpp"

#include <algorithm>
#include <unordered_set>

#include "tln/error.hpp"

namespace tln {

namespace {

Shape shape_after(const std::vector<Layer>& layers, Shape s) {
    for (const auto& l : layers) s = layer_output_shape(l.spec, s);
    return s;
}

void check_unique_names(const std::vector<std::string>& names) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw ContractError("duplicate layer name '" + n + "'");
    }
}

}  // namespace

void PretrainedNetwork::validate() const {
    if (units.empty()) throw ContractError("pretrained network has no units");
    const Unit& last = units.back();
    if (last.layers.empty() || last.layers.back().spec.kind != LayerKind::FC) {
        throw ContractError("last unit of a pretrained network must be the FC classification layer");
    }
    Shape s = meta.input_shape;
    std::vector<std::string> names;
    for (const auto& u : units) {
        for (const auto& l : u.layers) {
            s = layer_output_shape(l.spec, s);  // throws when shapes stop composing
            names.push_back(l.spec.name);
        }
    }
    check_unique_names(names);
    if (meta.class_count != last.layers.back().spec.units) {
        throw ContractError("classifier width disagrees with metadata class count");
    }
}

Shape Tln::top_shape() const {
    Shape s = meta.input_shape;
    for (const auto& u : units) s = shape_after(u.layers, s);
    return s;
}

Var Tln::forward_units(Tape& tape, Var x, std::int64_t count, Mode mode, const FreezePlan* plan) {
    if (count < 0 || count > total_units()) {
        throw ContractError("forward through " + std::to_string(count) + " of " +
                            std::to_string(total_units()) + " units");
    }
    for (std::int64_t i = 0; i < count; ++i) {
        Mode unit_mode = mode;
        if (plan && !plan->trainable[static_cast<std::size_t>(i)]) unit_mode = Mode::Eval;
        for (auto& layer : units[static_cast<std::size_t>(i)].layers) {
            x = forward_layer(layer, tape, x, unit_mode);
        }
    }
    return x;
}

Var Tln::forward(Tape& tape, Var x, Mode mode, const FreezePlan* plan) {
    x = forward_units(tape, x, total_units(), mode, plan);
    for (auto& layer : psi) x = forward_layer(layer, tape, x, mode);
    return x;
}

Var Tln::forward_to(Tape& tape, Var x, const std::string& layer_name, Mode mode) {
    for (auto& u : units) {
        for (auto& layer : u.layers) {
            x = forward_layer(layer, tape, x, mode);
            if (layer.spec.name == layer_name) return x;
        }
    }
    for (auto& layer : psi) {
        x = forward_layer(layer, tape, x, mode);
        if (layer.spec.name == layer_name) return x;
    }
    std::string known;
    for (const auto& n : layer_names()) known += (known.empty() ? "" : ", ") + n;
    throw ContractError("unknown layer '" + layer_name + "'; available: " + known);
}

std::vector<std::string> Tln::layer_names() const {
    std::vector<std::string> names;
    for (const auto& u : units) {
        for (const auto& l : u.layers) names.push_back(l.spec.name);
    }
    for (const auto& l : psi) names.push_back(l.spec.name);
    return names;
}

void Tln::validate() const {
    if (units.empty()) throw ContractError("network has no units");
    check_unique_names(layer_names());
    Shape s = meta.input_shape;
    for (const auto& u : units) s = shape_after(u.layers, s);
    for (const auto& l : psi) s = layer_output_shape(l.spec, s);
}

Tln slice(const PretrainedNetwork& chi, std::int64_t kappa) {
    if (kappa < 1 || kappa > chi.depth()) {
        throw ContractError("kappa " + std::to_string(kappa) + " outside [1," +
                            std::to_string(chi.depth()) + "]");
    }
    Tln net;
    net.units.assign(chi.units.begin(), chi.units.begin() + kappa);
    net.meta = chi.meta;
    net.retains_source_classifier = (kappa == chi.depth());
    return net;
}

void append_classifier(Tln& net, std::int64_t target_classes, Rng& rng) {
    if (!net.psi.empty()) throw ContractError("classifier module already appended");
    if (target_classes < 2) {
        throw ContractError("target classifier needs at least 2 classes, got " +
                            std::to_string(target_classes));
    }
    const Shape top = net.top_shape();
    if (top.size() != 1) {
        throw ContractError("classifier module expects a flat feature vector, network yields " +
                            shape_str(top));
    }
    LayerSpec c{LayerKind::FC, "C", target_classes};
    c.classifier_init = true;
    net.psi.push_back(make_layer(c, top, rng));
    net.psi.push_back(make_layer({LayerKind::SoftmaxHead, "softmax"}, {target_classes}, rng));
}

void augment_depth(Tln& net, const std::vector<std::int64_t>& sizes, NormScheme norm, Rng& rng) {
    if (!net.retains_source_classifier) {
        throw ContractError("augmentation requires the pretrained classification layer");
    }
    if (sizes.empty()) throw ContractError("augment_depth needs at least one layer size");
    if (!net.psi.empty()) throw ContractError("augment before appending the classifier module");
    Shape top = net.top_shape();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const std::string base = "L_N+" + std::to_string(i + 1);
        Unit u;
        u.name = base;
        u.pretrained = false;
        if (norm == NormScheme::L2) {
            u.layers.push_back(make_layer({LayerKind::L2Norm, base + ".norm"}, top, rng));
            // the paper's single learnable scaling parameter
            u.layers.push_back(make_layer({LayerKind::Scale, base + ".scale", 1}, top, rng));
        } else {
            u.layers.push_back(make_layer({LayerKind::BatchStd, base + ".norm"}, top, rng));
            LayerSpec sc{LayerKind::Scale, base + ".scale", top[0]};
            sc.with_shift = true;
            u.layers.push_back(make_layer(sc, top, rng));
        }
        u.layers.push_back(make_layer({LayerKind::FC, base, sizes[i]}, top, rng));
        u.layers.push_back(make_layer({LayerKind::ReLU, base + ".relu"}, {sizes[i]}, rng));
        top = {sizes[i]};
        net.units.push_back(std::move(u));
    }
}

FreezePlan make_freeze_plan(const Tln& net, std::int64_t nu) {
    const std::int64_t total = net.total_units();
    if (nu < 1 || nu > total) {
        throw ContractError("nu " + std::to_string(nu) + " outside [1," + std::to_string(total) +
                            "]");
    }
    FreezePlan plan;
    plan.nu = nu;
    plan.trainable.resize(static_cast<std::size_t>(total));
    plan.lr_mult.resize(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        plan.trainable[static_cast<std::size_t>(i)] = (i + 1 >= nu);
        plan.lr_mult[static_cast<std::size_t>(i)] =
            net.units[static_cast<std::size_t>(i)].pretrained ? 1.0 : 10.0;
    }
    return plan;
}

void apply_freeze_plan(Tln& net, const FreezePlan& plan) {
    if (plan.trainable.size() != net.units.size()) {
        throw ContractError("freeze plan covers " + std::to_string(plan.trainable.size()) +
                            " units, network has " + std::to_string(net.units.size()));
    }
    for (std::size_t i = 0; i < net.units.size(); ++i) {
        for (auto& layer : net.units[i].layers) {
            for (Tensor* p : layer_params(layer)) {
                p->requires_grad = plan.trainable[i];
                p->drop_grad();
            }
        }
    }
    for (auto& layer : net.psi) {
        for (Tensor* p : layer_params(layer)) {
            p->requires_grad = true;
            p->drop_grad();
        }
    }
}

Tln instantiate(const PretrainedNetwork& chi, const TlnConfig& config, std::uint64_t seed) {
    config.validate(chi.depth());
    Rng rng(mix_seed(seed, 0x7a6e));
    Tln net = slice(chi, config.kappa.resolve(chi.depth()));
    if (config.tau > 0) augment_depth(net, config.sizes, config.norm, rng);
    append_classifier(net, config.target_classes, rng);
    return net;
}

void reinitialize(Tln& net, Rng& rng) {
    Shape s = net.meta.input_shape;
    for (auto& u : net.units) {
        for (auto& layer : u.layers) {
            const bool rg = !layer_params(layer).empty() && layer_params(layer)[0]->requires_grad;
            layer = make_layer(layer.spec, s, rng);
            for (Tensor* p : layer_params(layer)) p->requires_grad = rg;
            s = layer_output_shape(layer.spec, s);
        }
    }
    for (auto& layer : net.psi) {
        const bool rg = !layer_params(layer).empty() && layer_params(layer)[0]->requires_grad;
        layer = make_layer(layer.spec, s, rng);
        for (Tensor* p : layer_params(layer)) p->requires_grad = rg;
        s = layer_output_shape(layer.spec, s);
    }
}

void for_each_param(Tln& net, const std::function<void(Tensor&, std::int64_t)>& fn) {
    for (std::size_t i = 0; i < net.units.size(); ++i) {
        for (auto& layer : net.units[i].layers) {
            for (Tensor* p : layer_params(layer)) fn(*p, static_cast<std::int64_t>(i));
        }
    }
    for (auto& layer : net.psi) {
        for (Tensor* p : layer_params(layer)) fn(*p, -1);
    }
}

PretrainedNetwork build_source_network(const std::string& arch, const Shape& input_shape,
                                       std::int64_t classes, Rng& rng) {
    if (input_shape.size() != 3) {
        throw ContractError("source network input must be [C,H,W], got " + shape_str(input_shape));
    }
    if (classes < 2) throw ContractError("source network needs at least 2 classes");

    PretrainedNetwork net;
    net.meta.input_shape = input_shape;
    net.meta.class_count = classes;
    Shape s = input_shape;

    auto conv_unit = [&](const std::string& name, std::int64_t ch, bool pool) {
        Unit u;
        u.name = name;
        u.pretrained = true;
        u.layers.push_back(make_layer({LayerKind::Conv, name, ch, 3, 1, 1}, s, rng));
        s = layer_output_shape(u.layers.back().spec, s);
        u.layers.push_back(make_layer({LayerKind::ReLU, name + ".relu"}, s, rng));
        if (pool) {
            u.layers.push_back(make_layer({LayerKind::MaxPool, name + ".pool", 0, 2, 2}, s, rng));
            s = layer_output_shape(u.layers.back().spec, s);
        }
        net.units.push_back(std::move(u));
    };
    auto block_unit = [&](const std::string& name, std::int64_t ch, bool pool) {
        Unit u;
        u.name = name;
        u.pretrained = true;
        for (int j = 1; j <= 2; ++j) {
            const std::string cn = name + ".conv" + std::to_string(j);
            u.layers.push_back(make_layer({LayerKind::Conv, cn, ch, 3, 1, 1}, s, rng));
            s = layer_output_shape(u.layers.back().spec, s);
            u.layers.push_back(make_layer({LayerKind::ReLU, cn + ".relu"}, s, rng));
        }
        if (pool) {
            u.layers.push_back(make_layer({LayerKind::MaxPool, name + ".pool", 0, 2, 2}, s, rng));
            s = layer_output_shape(u.layers.back().spec, s);
        }
        net.units.push_back(std::move(u));
    };
    auto fc_unit = [&](const std::string& name, std::int64_t width, bool relu) {
        Unit u;
        u.name = name;
        u.pretrained = true;
        LayerSpec spec{LayerKind::FC, name, width};
        spec.classifier_init = !relu;
        u.layers.push_back(make_layer(spec, s, rng));
        s = {width};
        if (relu) u.layers.push_back(make_layer({LayerKind::ReLU, name + ".relu"}, s, rng));
        net.units.push_back(std::move(u));
    };

    if (arch == "toy8") {
        conv_unit("conv1", 8, true);
        conv_unit("conv2", 12, true);
        conv_unit("conv3", 16, false);
        conv_unit("conv4", 16, false);
        conv_unit("conv5", 16, true);
        fc_unit("fc6", 64, true);
        fc_unit("fc7", 48, true);
        fc_unit("L_N", classes, false);
    } else if (arch == "toy4") {
        conv_unit("conv1", 4, true);
        conv_unit("conv2", 6, true);
        fc_unit("fc3", 16, true);
        fc_unit("L_N", classes, false);
    } else if (arch == "block8") {
        net.meta.unit_granularity = "block";
        block_unit("block1", 8, true);
        block_unit("block2", 12, true);
        block_unit("block3", 16, false);
        block_unit("block4", 16, false);
        block_unit("block5", 16, true);
        fc_unit("fc6", 64, true);
        fc_unit("fc7", 48, true);
        fc_unit("L_N", classes, false);
    } else {
        throw ContractError("unknown architecture '" + arch + "' (toy8, toy4, block8)");
    }
    net.meta.source_id = arch;
    net.validate();
    return net;
}

}  // namespace tln
