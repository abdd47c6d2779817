// Command-line surface for the transfer-learning laboratory: dataset
// generation/import, source pretraining, fine-tuning, layer-wise sweeps,
// t-SNE feature analysis and report rendering.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "tln/error.hpp"
#include "tln/io.hpp"
#include "tln/notation.hpp"
#include "tln/sweep.hpp"
#include "tln/synth.hpp"
#include "tln/train.hpp"
#include "tln/tsne.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tln;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

fs::path default_out(const std::string& sub) {
    const char* env = std::getenv("TLN_OUTPUT_DIR");
    return fs::path(env ? env : "runs") / sub;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::int64_t> parse_sizes(const std::string& s) {
    std::vector<std::int64_t> out;
    for (const auto& part : split_list(s)) out.push_back(std::stoll(part));
    return out;
}

struct RunSettings {
    Budget budget;
    Schedule schedule;
    double momentum = 0.9;
    AugmentConfig augment;
};

// Named presets; "paper" matches the reference protocol, "desk" is sized for
// the synthetic datasets.
RunSettings preset_settings(const std::string& preset) {
    RunSettings s;
    if (preset == "paper") {
        s.budget = {2000, 100};
        s.schedule = {0.005, 0.1, 10};
    } else if (preset == "desk") {
        s.budget = {400, 32};
        s.schedule = {0.01, 0.1, 30};
    } else {
        throw ContractError("unknown preset '" + preset + "' (paper, desk)");
    }
    return s;
}

json settings_json(const RunSettings& s) {
    return json{{"budget", {{"iterations", s.budget.iterations}, {"batch_size", s.budget.batch_size}}},
                {"schedule",
                 {{"base_lr", s.schedule.base_lr},
                  {"decay_factor", s.schedule.decay_factor},
                  {"step_epochs", s.schedule.step_epochs}}},
                {"momentum", s.momentum},
                {"augment",
                 {{"pad", s.augment.pad},
                  {"crop_h", s.augment.crop_h},
                  {"crop_w", s.augment.crop_w},
                  {"flip_p", s.augment.flip_p}}}};
}

void apply_overrides(RunSettings& s, std::int64_t iterations, std::int64_t batch, double lr) {
    if (iterations > 0) s.budget.iterations = iterations;
    if (batch > 0) s.budget.batch_size = batch;
    if (lr > 0) s.schedule.base_lr = lr;
}

TlnConfig make_tln_config(const std::string& tln_text, const std::string& sizes_text,
                          const std::string& norm_text, std::int64_t target_classes) {
    TlnConfig cfg = parse_tln(tln_text);
    if (!sizes_text.empty()) {
        auto sizes = parse_sizes(sizes_text);
        if (std::int64_t(sizes.size()) != cfg.tau) {
            throw ContractError("TLN string declares tau=" + std::to_string(cfg.tau) + " but " +
                                std::to_string(sizes.size()) + " sizes were given");
        }
        cfg.sizes = std::move(sizes);
    } else if (cfg.tau > 0) {
        cfg.sizes.assign(std::size_t(cfg.tau), 2048);  // the paper's best-performing width
    }
    cfg.norm = norm_scheme_from_name(norm_text);
    cfg.target_classes = target_classes;
    return cfg;
}

// ---------------------------------------------------------------------- cmds

int cmd_make_dataset(const std::string& out_dir, SynthSpec spec) {
    Dataset ds = generate_shapes(spec);
    save_dataset(ds, out_dir);
    json cfg{{"name", spec.name},       {"classes", spec.classes},
             {"channels", spec.channels}, {"height", spec.height},
             {"width", spec.width},     {"per_class", spec.per_class},
             {"seed", spec.seed},       {"class_offset", spec.class_offset},
             {"noise", spec.noise}};
    write_manifest(fs::path(out_dir) / "manifest.json", "make-dataset", cfg);
    std::cout << "wrote " << ds.count() << " samples (" << spec.classes << " classes) to "
              << out_dir << "\n";
    return kExitOk;
}

int cmd_import(const std::string& out_dir, const std::string& csv_file, const std::string& name,
               const std::string& classes_text, std::int64_t channels, std::int64_t height,
               std::int64_t width) {
    Dataset ds;
    ds.name = name;
    ds.class_names = split_list(classes_text);
    ds.channels = channels;
    ds.height = height;
    ds.width = width;
    std::ifstream is(csv_file);
    if (!is) throw DataError("cannot read " + csv_file);
    std::string line;
    std::int64_t record = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto fields = split_list(line);
        if (std::int64_t(fields.size()) != ds.sample_values() + 1) {
            throw DataError("record " + std::to_string(record) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(ds.sample_values() + 1));
        }
        const long label = std::stol(fields[0]);
        if (label < 0 || label >= std::int64_t(ds.class_names.size())) {
            throw DataError("record " + std::to_string(record) + " label " +
                            std::to_string(label) + " exceeds " +
                            std::to_string(ds.class_names.size()) + " classes");
        }
        ds.labels.push_back(std::uint8_t(label));
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const long v = std::stol(fields[i]);
            if (v < 0 || v > 255) {
                throw DataError("record " + std::to_string(record) + " value " + fields[i] +
                                " outside [0,255]");
            }
            ds.pixels.push_back(std::uint8_t(v));
        }
        ++record;
    }
    ds.compute_channel_stats();
    ds.validate();
    save_dataset(ds, out_dir);
    std::cout << "imported " << record << " samples to " << out_dir << "\n";
    return kExitOk;
}

int cmd_pretrain(const std::string& data_dir, const std::string& arch, const std::string& out_dir,
                 RunSettings settings, std::uint64_t seed) {
    auto ds = std::make_shared<Dataset>(load_dataset(data_dir));
    Rng rng(mix_seed(seed, 0x9e7));
    PretrainedNetwork chi =
        build_source_network(arch, {ds->channels, ds->height, ds->width}, ds->class_count(), rng);
    chi.meta.source_id = ds->name + ":" + arch;

    Tln net;
    net.units = chi.units;
    net.meta = chi.meta;
    net.retains_source_classifier = true;
    // train the source classifier itself: psi stays empty, the plan trains all
    // units, and the loss reads L_N's logits directly
    FreezePlan plan = make_freeze_plan(net, 1);

    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "metrics.jsonl");
    TrainOptions opt;
    opt.budget = settings.budget;
    opt.schedule = settings.schedule;
    opt.momentum = settings.momentum;
    opt.augment = settings.augment;
    opt.seed = seed;
    opt.log = &log;
    SampleSet empty_test;
    empty_test.data = ds;
    TrainResult r = train(net, plan, full_set(ds), empty_test, opt);

    chi.units = net.units;
    save_pretrained(chi, fs::path(out_dir) / "model.tln");
    json cfg{{"arch", arch},
             {"dataset", ds->name},
             {"data_dir", data_dir},
             {"seed", seed},
             {"settings", settings_json(settings)}};
    write_manifest(fs::path(out_dir) / "manifest.json", "pretrain", cfg);
    const double acc = r.trace.empty() ? 0.0 : r.trace.back().train_acc;
    std::cout << "pretrained " << arch << " on " << ds->name << ": train accuracy " << acc
              << ", model at " << (fs::path(out_dir) / "model.tln").string() << "\n";
    return kExitOk;
}

int cmd_finetune(const std::string& model_file, const std::string& data_dir,
                 const std::string& tln_text, const std::string& sizes_text,
                 const std::string& norm_text, RunSettings settings, std::uint64_t seed,
                 double train_fraction, bool random_init, const std::string& out_dir,
                 bool save_model) {
    PretrainedNetwork chi = load_pretrained(model_file);
    auto ds = std::make_shared<Dataset>(load_dataset(data_dir));
    TlnConfig cfg = make_tln_config(tln_text, sizes_text, norm_text, ds->class_count());
    cfg.validate(chi.depth());

    auto [train_set, test_set] = split_dataset(ds, train_fraction, mix_seed(seed, 0x59d7));
    Tln net = instantiate(chi, cfg, seed);
    if (random_init) {
        Rng rng(mix_seed(seed, 0xbadc0de));
        reinitialize(net, rng);
    }
    FreezePlan plan = make_freeze_plan(net, cfg.nu.resolve(chi.depth()));

    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "metrics.jsonl");
    TrainOptions opt;
    opt.budget = settings.budget;
    opt.schedule = settings.schedule;
    opt.momentum = settings.momentum;
    opt.augment = settings.augment;
    opt.seed = seed;
    opt.log = &log;
    TrainResult r = train(net, plan, train_set, test_set, opt);

    Augmentor aug(settings.augment, ds->channel_mean, ds->channel_std);
    const double test_acc = evaluate(net, test_set, aug);
    json config{{"tln", format_tln(cfg)},
                {"sizes", cfg.sizes},
                {"norm", norm_scheme_name(cfg.norm)},
                {"model", model_file},
                {"data_dir", data_dir},
                {"dataset", ds->name},
                {"seed", seed},
                {"train_fraction", train_fraction},
                {"random_init", random_init},
                {"settings", settings_json(settings)}};
    write_manifest(fs::path(out_dir) / "manifest.json", "finetune", config);
    json result{{"test_accuracy", test_acc},
                {"train_accuracy", r.trace.empty() ? 0.0 : r.trace.back().train_acc},
                {"epochs", r.trace.size()}};
    write_text_file(fs::path(out_dir) / "result.json", canonical_json(result));
    if (save_model) save_network(net, fs::path(out_dir) / "model.tln");
    std::cout << "finetune " << format_tln(cfg) << (random_init ? " (random init)" : "")
              << ": test accuracy " << test_acc << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config_file, const std::string& out_override,
              std::int64_t jobs_override) {
    json jc;
    try {
        jc = json::parse(read_text_file(config_file));
    } catch (const json::exception& e) {
        throw DataError("bad sweep config " + config_file + ": " + e.what());
    }
    fs::path base = fs::path(config_file).parent_path();
    auto resolve = [&base](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base / path;
    };

    const std::string preset = jc.value("preset", "desk");
    RunSettings settings = preset_settings(preset);
    if (jc.contains("budget")) {
        settings.budget.iterations = jc["budget"].value("iterations", settings.budget.iterations);
        settings.budget.batch_size = jc["budget"].value("batch_size", settings.budget.batch_size);
    }
    if (jc.contains("schedule")) {
        settings.schedule.base_lr = jc["schedule"].value("base_lr", settings.schedule.base_lr);
        settings.schedule.decay_factor =
            jc["schedule"].value("decay_factor", settings.schedule.decay_factor);
        settings.schedule.step_epochs =
            jc["schedule"].value("step_epochs", settings.schedule.step_epochs);
    }
    if (jc.contains("augment")) {
        settings.augment.pad = jc["augment"].value("pad", settings.augment.pad);
        settings.augment.flip_p = jc["augment"].value("flip_p", settings.augment.flip_p);
    }
    settings.momentum = jc.value("momentum", settings.momentum);

    PretrainedNetwork chi = load_pretrained(resolve(jc.at("source_model").get<std::string>()));
    auto ds = std::make_shared<Dataset>(load_dataset(resolve(jc.at("dataset").get<std::string>())));

    SweepConfig cfg;
    cfg.master_seed = jc.value("master_seed", std::uint64_t(1));
    cfg.repeats = jc.value("repeats", std::int64_t(1));
    cfg.budget = settings.budget;
    cfg.schedule = settings.schedule;
    cfg.momentum = settings.momentum;
    cfg.augment = settings.augment;
    cfg.dataset_id = ds->name;
    cfg.jobs = jobs_override > 0 ? jobs_override
                                 : jc.value("jobs", std::int64_t(std::thread::hardware_concurrency()));
    if (cfg.jobs < 1) cfg.jobs = 1;

    for (const auto& jv : jc.at("variants")) {
        SweepVariant v;
        v.label = jv.at("label").get<std::string>();
        std::string sizes_text;
        if (jv.contains("sizes")) {
            for (const auto& size : jv["sizes"]) {
                if (!sizes_text.empty()) sizes_text += ",";
                sizes_text += std::to_string(size.get<std::int64_t>());
            }
        }
        v.config = make_tln_config(jv.at("tln").get<std::string>(), sizes_text,
                                   jv.value("norm", "std"), ds->class_count());
        v.random_init = jv.value("random_init", false);
        cfg.variants.push_back(std::move(v));
    }

    const double train_fraction = jc.value("train_fraction", 0.75);
    const std::uint64_t split_seed = jc.value("split_seed", std::uint64_t(1));
    auto [train_set, test_set] = split_dataset(ds, train_fraction, split_seed);

    SweepResult result = run_sweep(cfg, chi, train_set, test_set);

    const fs::path out =
        !out_override.empty() ? fs::path(out_override) : fs::path(jc.value("output", default_out("sweep").string()));
    fs::create_directories(out);
    json manifest_cfg = jc;
    manifest_cfg["resolved_settings"] = settings_json(settings);
    manifest_cfg["dataset_classes"] = ds->class_count();
    json manifest = make_manifest("sweep", manifest_cfg);
    write_text_file(out / "manifest.json", canonical_json(manifest));
    write_text_file(out / "sweep.json", canonical_json(sweep_to_json(result, manifest)));
    write_text_file(out / "sweep.csv", sweep_long_csv(result));
    std::cout << "sweep complete: " << result.variants.size() << " variants, "
              << cfg.repeats << " repeats -> " << (out / "sweep.json").string() << "\n";
    for (const auto& v : result.variants) {
        auto [nu, acc] = best_setup(result, v.label);
        std::cout << "  " << v.label << ": best nu=" << nu << " acc=" << acc << "\n";
    }
    return kExitOk;
}

int cmd_tsne(const std::string& model_file, const std::string& datasets_text,
             const std::string& layer, double perplexity, std::int64_t iterations, double lr,
             std::uint64_t seed, std::int64_t samples_per_dataset, bool post_softmax,
             const std::string& out_dir) {
    PretrainedNetwork chi = load_pretrained(model_file);
    Tln net = slice(chi, chi.depth());

    FeatureMatrix all;
    const auto dataset_dirs = split_list(datasets_text);
    for (std::size_t which = 0; which < dataset_dirs.size(); ++which) {
        auto ds = std::make_shared<Dataset>(load_dataset(dataset_dirs[which]));
        SampleSet set = full_set(ds);
        if (samples_per_dataset > 0 && set.size() > samples_per_dataset) {
            Rng rng(mix_seed(seed, which));
            rng.shuffle(set.idx);
            set.idx.resize(std::size_t(samples_per_dataset));
            std::sort(set.idx.begin(), set.idx.end());
        }
        append_features(all, extract_features(net, set, layer, post_softmax));
    }
    all.validate();
    if (all.count() < 3) throw ContractError("need at least 3 feature rows to embed");

    Tensor p = symmetrized_affinities(
        conditional_affinities(pairwise_sq_distances(all.rows), perplexity));
    TsneOptions opt;
    opt.iterations = iterations;
    opt.learning_rate = lr;
    opt.seed = seed;
    Embedding e = tsne_embed(p, opt);

    fs::create_directories(out_dir);
    std::string csv = "sample_id,origin_dataset,x,y\n";
    for (std::int64_t i = 0; i < all.count(); ++i) {
        char line[192];
        std::snprintf(line, sizeof(line), "%lld,%s,%.17g,%.17g\n",
                      static_cast<long long>(all.sample_id[std::size_t(i)]),
                      all.origin[std::size_t(i)].c_str(), e.points.at2(i, 0), e.points.at2(i, 1));
        csv += line;
    }
    write_text_file(fs::path(out_dir) / "tsne.csv", csv);
    std::ofstream kl(fs::path(out_dir) / "kl.jsonl");
    for (std::size_t i = 0; i < e.kl_trace.size(); ++i) {
        kl << "{\"iteration\":" << i + 1 << ",\"kl\":" << e.kl_trace[i] << "}\n";
    }
    json cfg{{"model", model_file},
             {"datasets", datasets_text},
             {"layer", layer},
             {"perplexity", perplexity},
             {"iterations", iterations},
             {"learning_rate", lr},
             {"seed", seed},
             {"samples_per_dataset", samples_per_dataset},
             {"post_softmax", post_softmax}};
    write_manifest(fs::path(out_dir) / "manifest.json", "tsne", cfg);
    std::cout << "embedded " << all.count() << " samples, final KL " << e.final_kl << " -> "
              << (fs::path(out_dir) / "tsne.csv").string() << "\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& sweep_files, const std::string& nu_text,
               const std::string& pairs_text, const std::string& out_dir) {
    struct Loaded {
        std::string dataset;
        SweepResult result;
    };
    std::vector<Loaded> sweeps;
    for (const auto& f : sweep_files) {
        json j;
        try {
            j = json::parse(read_text_file(f));
        } catch (const json::exception& e) {
            throw DataError("bad sweep file " + f + ": " + e.what());
        }
        Loaded l;
        l.result = sweep_from_json(j);
        l.dataset = j.contains("manifest") && j["manifest"]["config"].contains("dataset")
                        ? j["manifest"]["config"]["dataset"].get<std::string>()
                        : f;
        sweeps.push_back(std::move(l));
    }
    if (sweeps.empty()) throw ContractError("report needs at least one sweep file");

    // per-nu curves, all datasets and variants
    std::string curves = "dataset,variant,nu,mean_accuracy,ci95\n";
    for (const auto& s : sweeps) {
        for (const auto& v : s.result.variants) {
            for (auto nu : v.nus) {
                char line[224];
                std::snprintf(line, sizeof(line), "%s,%s,%lld,%.17g,%.17g\n", s.dataset.c_str(),
                              v.label.c_str(), static_cast<long long>(nu),
                              s.result.mean_accuracy(v.label, nu),
                              accuracy_ci95(s.result, v.label, nu));
                curves += line;
            }
        }
    }

    // gain pairs: explicit "target=baseline" list, or consecutive variants
    std::vector<std::pair<std::string, std::string>> pairs;
    if (!pairs_text.empty()) {
        for (const auto& p : split_list(pairs_text)) {
            const auto at = p.find('=');
            if (at == std::string::npos) {
                throw ContractError("pair '" + p + "' is not target=baseline");
            }
            pairs.emplace_back(p.substr(0, at), p.substr(at + 1));
        }
    } else {
        const auto& vs = sweeps.front().result.variants;
        for (std::size_t i = 1; i < vs.size(); ++i) {
            pairs.emplace_back(vs[i].label, vs[i - 1].label);
        }
    }

    std::ostringstream text;
    std::string gains = "target,baseline,nu";
    for (const auto& s : sweeps) gains += "," + s.dataset;
    gains += ",avg\n";
    for (const auto& [target, baseline] : pairs) {
        // resolve the requested nu against each sweep's own setup list
        std::string row = target + "," + baseline;
        double total = 0.0;
        std::string nu_shown;
        std::string per_ds;
        for (const auto& s : sweeps) {
            const auto& vt = s.result.variant(target);
            std::int64_t depth = vt.nus.front();
            std::int64_t nu;
            if (nu_text == "best") {
                nu = best_setup(s.result, target).first;
            } else {
                TlnConfig tmp;
                tmp.nu = parse_tln("[chi]_" + nu_text + "^psi").nu;
                nu = tmp.nu.resolve(depth);
            }
            const double g = gain_points(s.result, baseline, target, nu);
            total += g;
            char cell[64];
            std::snprintf(cell, sizeof(cell), ",%.3f", g);
            per_ds += cell;
            nu_shown = std::to_string(nu);
        }
        char avg[64];
        std::snprintf(avg, sizeof(avg), ",%.3f", total / double(sweeps.size()));
        gains += row + "," + nu_shown + per_ds + avg + "\n";
        text << "gain of " << target << " over " << baseline << " at nu=" << nu_shown << ": "
             << (total / double(sweeps.size())) << " points (avg over " << sweeps.size()
             << " dataset(s))\n";
    }

    for (const auto& s : sweeps) {
        text << "\ndataset " << s.dataset << ":\n";
        for (const auto& v : s.result.variants) {
            auto [nu, acc] = best_setup(s.result, v.label);
            text << "  " << v.label << ": best nu=" << nu << " mean accuracy=" << acc << " +- "
                 << accuracy_ci95(s.result, v.label, nu) << "\n";
        }
    }

    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "curves.csv", curves);
    write_text_file(fs::path(out_dir) / "gains.csv", gains);
    write_text_file(fs::path(out_dir) / "report.txt", text.str());
    // the long-form matrix, re-derived: matches the sweep's own sweep.csv
    write_text_file(fs::path(out_dir) / "long.csv", sweep_long_csv(sweeps.front().result));
    std::cout << text.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transfer-learning network laboratory"};
    app.require_subcommand(1);

    // make-dataset
    auto* mk = app.add_subcommand("make-dataset", "generate a synthetic shape dataset");
    SynthSpec spec;
    std::string mk_out = default_out("dataset").string();
    mk->add_option("--out", mk_out, "output directory");
    mk->add_option("--name", spec.name, "dataset name");
    mk->add_option("--classes", spec.classes, "number of classes");
    mk->add_option("--offset", spec.class_offset, "archetype window offset");
    mk->add_option("--per-class", spec.per_class, "samples per class");
    mk->add_option("--channels", spec.channels, "1 or 3");
    mk->add_option("--height", spec.height, "image height");
    mk->add_option("--width", spec.width, "image width");
    mk->add_option("--seed", spec.seed, "generator seed");
    mk->add_option("--noise", spec.noise, "pixel noise sigma");

    // import
    auto* im = app.add_subcommand("import", "convert a CSV (label,p0,...,pN) to a dataset");
    std::string im_out = default_out("imported").string(), im_csv, im_name = "imported",
                im_classes;
    std::int64_t im_c = 3, im_h = 16, im_w = 16;
    im->add_option("--out", im_out, "output directory");
    im->add_option("--csv", im_csv, "input csv file")->required();
    im->add_option("--name", im_name, "dataset name");
    im->add_option("--class-names", im_classes, "comma-separated class names")->required();
    im->add_option("--channels", im_c, "channels");
    im->add_option("--height", im_h, "height");
    im->add_option("--width", im_w, "width");

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "train a source network on a dataset");
    std::string pt_data, pt_arch = "toy8", pt_out = default_out("pretrain").string(),
                pt_preset = "desk";
    std::uint64_t pt_seed = 1;
    std::int64_t pt_iters = 0, pt_batch = 0;
    double pt_lr = 0;
    pt->add_option("--data", pt_data, "dataset directory")->required();
    pt->add_option("--arch", pt_arch, "toy8, toy4 or block8");
    pt->add_option("--out", pt_out, "output directory");
    pt->add_option("--preset", pt_preset, "paper or desk");
    pt->add_option("--seed", pt_seed, "seed");
    pt->add_option("--iterations", pt_iters, "override budget iterations");
    pt->add_option("--batch", pt_batch, "override batch size");
    pt->add_option("--lr", pt_lr, "override base learning rate");

    // finetune
    auto* ft = app.add_subcommand("finetune", "fine-tune one TLN configuration");
    std::string ft_model, ft_data, ft_tln = "[chi]_N-5^psi", ft_sizes, ft_norm = "std",
                ft_out = default_out("finetune").string(), ft_preset = "desk";
    std::uint64_t ft_seed = 1;
    std::int64_t ft_iters = 0, ft_batch = 0;
    double ft_lr = 0, ft_fraction = 0.75;
    bool ft_random = false, ft_save = false;
    ft->add_option("--model", ft_model, "source network archive")->required();
    ft->add_option("--data", ft_data, "target dataset directory")->required();
    ft->add_option("--tln", ft_tln, "TLN notation string");
    ft->add_option("--sizes", ft_sizes, "appended layer sizes, comma separated");
    ft->add_option("--norm", ft_norm, "std or l2");
    ft->add_option("--out", ft_out, "output directory");
    ft->add_option("--preset", ft_preset, "paper or desk");
    ft->add_option("--seed", ft_seed, "seed");
    ft->add_option("--train-fraction", ft_fraction, "train split fraction");
    ft->add_flag("--random-init", ft_random, "random-initialization baseline");
    ft->add_flag("--save-model", ft_save, "write the fine-tuned network archive");
    ft->add_option("--iterations", ft_iters, "override budget iterations");
    ft->add_option("--batch", ft_batch, "override batch size");
    ft->add_option("--lr", ft_lr, "override base learning rate");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run the layer-wise fine-tuning scheme");
    std::string sw_config, sw_out;
    std::int64_t sw_jobs = 0;
    sw->add_option("--config", sw_config, "experiment config json")->required();
    sw->add_option("--out", sw_out, "override output directory");
    sw->add_option("--jobs", sw_jobs, "parallel workers");

    // tsne
    auto* ts = app.add_subcommand("tsne", "embed layer features from one or more datasets");
    std::string ts_model, ts_datasets, ts_layer = "L_N",
                ts_out = default_out("tsne").string();
    double ts_perp = 30.0, ts_lr = 200.0;
    std::int64_t ts_iters = 1000, ts_samples = 0;
    std::uint64_t ts_seed = 1;
    bool ts_post = false;
    ts->add_option("--model", ts_model, "source network archive")->required();
    ts->add_option("--datasets", ts_datasets, "comma-separated dataset directories")->required();
    ts->add_option("--layer", ts_layer, "layer to tap (pre-softmax)");
    ts->add_option("--perplexity", ts_perp, "target perplexity");
    ts->add_option("--iterations", ts_iters, "gradient descent iterations");
    ts->add_option("--lr", ts_lr, "embedding learning rate");
    ts->add_option("--seed", ts_seed, "seed");
    ts->add_option("--samples", ts_samples, "cap per dataset (0 = all)");
    ts->add_flag("--post-softmax", ts_post, "tap probabilities instead of logits");
    ts->add_option("--out", ts_out, "output directory");

    // report
    auto* rp = app.add_subcommand("report", "render gain tables and per-nu curves");
    std::vector<std::string> rp_sweeps;
    std::string rp_nu = "N-5", rp_pairs, rp_out = default_out("report").string();
    rp->add_option("--sweep", rp_sweeps, "sweep.json files (one per dataset)")->required();
    rp->add_option("--nu", rp_nu, "gain table position: N, N-1, ..., an index, or 'best'");
    rp->add_option("--pairs", rp_pairs, "target=baseline pairs, comma separated");
    rp->add_option("--out", rp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*mk) return cmd_make_dataset(mk_out, spec);
        if (*im) return cmd_import(im_out, im_csv, im_name, im_classes, im_c, im_h, im_w);
        if (*pt) {
            RunSettings s = preset_settings(pt_preset);
            apply_overrides(s, pt_iters, pt_batch, pt_lr);
            return cmd_pretrain(pt_data, pt_arch, pt_out, s, pt_seed);
        }
        if (*ft) {
            RunSettings s = preset_settings(ft_preset);
            apply_overrides(s, ft_iters, ft_batch, ft_lr);
            return cmd_finetune(ft_model, ft_data, ft_tln, ft_sizes, ft_norm, s, ft_seed,
                                ft_fraction, ft_random, ft_out, ft_save);
        }
        if (*sw) return cmd_sweep(sw_config, sw_out, sw_jobs);
        if (*ts) {
            return cmd_tsne(ts_model, ts_datasets, ts_layer, ts_perp, ts_iters, ts_lr, ts_seed,
                            ts_samples, ts_post, ts_out);
        }
        if (*rp) return cmd_report(rp_sweeps, rp_nu, rp_pairs, rp_out);
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
