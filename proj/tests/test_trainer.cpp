#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "tln/error.hpp"
#include "tln/network.hpp"
#include "tln/optim.hpp"
#include "tln/synth.hpp"
#include "tln/train.hpp"

using namespace tln;

namespace {

// Two classes separated by mean brightness: linearly separable by design.
std::shared_ptr<Dataset> brightness_dataset(std::int64_t per_class, std::uint64_t seed) {
    auto ds = std::make_shared<Dataset>();
    ds->name = "brightness";
    ds->class_names = {"dark", "bright"};
    ds->channels = 1;
    ds->height = 8;
    ds->width = 8;
    Rng rng(seed);
    for (std::int64_t k = 0; k < 2; ++k) {
        for (std::int64_t i = 0; i < per_class; ++i) {
            for (std::int64_t j = 0; j < 64; ++j) {
                const double v = k == 0 ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
                ds->pixels.push_back(std::uint8_t(v * 255.0));
            }
            ds->labels.push_back(std::uint8_t(k));
        }
    }
    ds->compute_channel_stats();
    ds->validate();
    return ds;
}

struct Fixture {
    PretrainedNetwork chi;
    Tln net;
    FreezePlan plan;
};

Fixture make_fixture(std::int64_t classes, std::int64_t nu, std::uint64_t seed) {
    Rng rng(seed);
    Fixture f;
    f.chi = build_source_network("toy4", {1, 8, 8}, 3, rng);
    TlnConfig cfg;
    cfg.nu = Ref{false, nu};
    cfg.target_classes = classes;
    f.net = instantiate(f.chi, cfg, seed);
    f.plan = make_freeze_plan(f.net, nu);
    return f;
}

std::vector<std::vector<double>> snapshot_params(Tln& net) {
    std::vector<std::vector<double>> out;
    for_each_param(net, [&out](Tensor& p, std::int64_t) { out.push_back(p.data); });
    return out;
}

}  // namespace

TEST_CASE("lr schedule follows the piecewise rule") {
    Schedule s;  // 0.005, x0.1 every 10 epochs
    CHECK(lr_at(s, 0) == 0.005);
    CHECK(lr_at(s, 9) == 0.005);
    CHECK(lr_at(s, 10) == doctest::Approx(0.0005).epsilon(1e-12));
    CHECK(lr_at(s, 25) == doctest::Approx(0.00005).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(s, -1), ContractError);

    // piecewise constant, non-increasing, exact decay ratio between steps
    for (std::int64_t e = 1; e <= 100; ++e) {
        CHECK(lr_at(s, e) <= lr_at(s, e - 1));
        if (e % s.step_epochs != 0) CHECK(lr_at(s, e) == lr_at(s, e - 1));
    }
    for (std::int64_t k = 1; k < 5; ++k) {
        const double ratio = lr_at(s, k * 10) / lr_at(s, k * 10 - 1);
        CHECK(ratio == doctest::Approx(0.1).epsilon(1e-12));
    }
}

TEST_CASE("sgd_step plain update") {
    auto f = make_fixture(2, 1, 7);
    SgdState st = make_sgd_state(f.net, 0.0);
    // zero all params, gradient 1 on everything, lr 1, momentum 0
    for_each_param(f.net, [](Tensor& p, std::int64_t) {
        std::fill(p.data.begin(), p.data.end(), 0.0);
        p.ensure_grad();
        std::fill(p.grad.begin(), p.grad.end(), 1.0);
    });
    FreezePlan all = make_freeze_plan(f.net, 1);
    for (auto& m : all.lr_mult) m = 1.0;
    all.psi_lr_mult = 1.0;
    sgd_step(f.net, all, st, 1.0);
    for_each_param(f.net, [](Tensor& p, std::int64_t) {
        for (double v : p.data) CHECK(v == -1.0);
    });
}

TEST_CASE("sgd_step respects freezing and multipliers exactly") {
    auto f = make_fixture(2, 3, 8);  // units 1-2 frozen, 3-4 + psi trainable
    apply_freeze_plan(f.net, f.plan);
    SgdState st = make_sgd_state(f.net, 0.0);
    auto before = snapshot_params(f.net);
    for_each_param(f.net, [&](Tensor& p, std::int64_t unit) {
        const bool trainable = unit < 0 || f.plan.trainable[std::size_t(unit)];
        if (trainable) {
            p.ensure_grad();
            std::fill(p.grad.begin(), p.grad.end(), 1.0);
        }
    });
    sgd_step(f.net, f.plan, st, 0.125);
    std::size_t slot = 0;
    for_each_param(f.net, [&](Tensor& p, std::int64_t unit) {
        const bool trainable = unit < 0 || f.plan.trainable[std::size_t(unit)];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            if (!trainable) {
                CHECK(p.data[i] == before[slot][i]);  // bit-identical
            } else if (unit >= 0) {
                // pretrained multiplier 1: update is exactly lr*g
                CHECK(p.data[i] == before[slot][i] - 0.125);
            } else {
                // psi multiplier 10: exactly 10x the base update
                CHECK(p.data[i] == before[slot][i] - 1.25);
            }
        }
        ++slot;
    });
}

TEST_CASE("sgd_step with multiplier m equals lr*m at multiplier 1") {
    auto fa = make_fixture(2, 1, 9);
    auto fb = make_fixture(2, 1, 9);
    Rng rng(10);
    std::vector<double> grads;
    for_each_param(fa.net, [&](Tensor& p, std::int64_t) {
        p.ensure_grad();
        for (auto& g : p.grad) {
            g = rng.gaussian();
            grads.push_back(g);
        }
    });
    std::size_t at = 0;
    for_each_param(fb.net, [&](Tensor& p, std::int64_t) {
        p.ensure_grad();
        for (auto& g : p.grad) g = grads[at++];
    });

    FreezePlan pa = make_freeze_plan(fa.net, 1);
    for (auto& m : pa.lr_mult) m = 4.0;
    pa.psi_lr_mult = 4.0;
    FreezePlan pb = make_freeze_plan(fb.net, 1);
    for (auto& m : pb.lr_mult) m = 1.0;
    pb.psi_lr_mult = 1.0;

    SgdState sa = make_sgd_state(fa.net, 0.0);
    SgdState sb = make_sgd_state(fb.net, 0.0);
    sgd_step(fa.net, pa, sa, 0.25);
    sgd_step(fb.net, pb, sb, 0.25 * 4.0);
    CHECK(snapshot_params(fa.net) == snapshot_params(fb.net));
}

TEST_CASE("sgd_step without gradients on a trainable parameter is a contract error") {
    auto f = make_fixture(2, 1, 11);
    apply_freeze_plan(f.net, f.plan);  // drops stale grads
    SgdState st = make_sgd_state(f.net, 0.9);
    CHECK_THROWS_AS(sgd_step(f.net, f.plan, st, 0.01), ContractError);
}

TEST_CASE("augmentation pipeline") {
    Rng img_rng(12);
    Tensor img = Tensor::zeros({1, 6, 6});
    for (auto& v : img.data) v = img_rng.uniform();

    // same seed, same output
    Augmentor aug({2, 0, 0, 0.5}, {0.4}, {0.2});
    Rng a(99), b(99);
    CHECK(aug.train(img, a).data == aug.train(img, b).data);

    // forced flip twice returns the original (identity normalization)
    Augmentor flip({0, 0, 0, 1.0}, {0.0}, {1.0});
    Rng c(1), d(2);
    Tensor once = flip.train(img, c);
    Tensor twice = flip.train(once, d);
    CHECK(twice.data == img.data);

    // eval path: deterministic center crop, no flip
    Augmentor ev({1, 6, 6, 0.5}, {0.0}, {1.0});
    CHECK(ev.eval(img).data == ev.eval(img).data);
    CHECK(ev.eval(img).shape == Shape{1, 6, 6});

    // a crop larger than the padded image cannot be served
    Augmentor toobig({1, 12, 12, 0.5}, {0.0}, {1.0});
    Rng r(3);
    CHECK_THROWS_AS(toobig.train(img, r), ContractError);
    CHECK_THROWS_AS(toobig.eval(img), ContractError);
}

TEST_CASE("pipeline output statistics match the dataset statistics") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 60;
    spec.seed = 13;
    auto ds = std::make_shared<Dataset>(generate_shapes(spec));
    Augmentor aug({2, 0, 0, 0.5}, ds->channel_mean, ds->channel_std);
    Rng rng(14);
    double sum = 0.0, sumsq = 0.0;
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < ds->count(); ++i) {
        Tensor t = aug.train(ds->image(i), rng);
        for (double v : t.data) {
            sum += v;
            sumsq += v * v;
            ++n;
        }
    }
    const double mean = sum / double(n);
    const double var = sumsq / double(n) - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 0.05);
}

TEST_CASE("stratified split") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 100;
    spec.seed = 15;
    auto ds = std::make_shared<Dataset>(generate_shapes(spec));
    auto [train, test] = split_dataset(ds, 0.75, 42);
    CHECK(train.size() == 300);
    CHECK(test.size() == 100);
    std::vector<std::int64_t> per_class(4, 0);
    for (std::int64_t i = 0; i < train.size(); ++i) ++per_class[std::size_t(train.label(i))];
    for (auto c : per_class) CHECK(c == 75);

    // disjoint and exhaustive
    std::vector<bool> seen(std::size_t(ds->count()), false);
    for (auto i : train.idx) {
        CHECK_FALSE(seen[std::size_t(i)]);
        seen[std::size_t(i)] = true;
    }
    for (auto i : test.idx) {
        CHECK_FALSE(seen[std::size_t(i)]);
        seen[std::size_t(i)] = true;
    }
    CHECK(std::count(seen.begin(), seen.end(), false) == 0);

    // deterministic per seed
    auto [t2, e2] = split_dataset(ds, 0.75, 42);
    CHECK(t2.idx == train.idx);
    auto [t3, e3] = split_dataset(ds, 0.75, 43);
    CHECK(t3.idx != train.idx);
}

TEST_CASE("split edge cases") {
    auto tiny = brightness_dataset(1, 16);  // 1 sample per class
    CHECK_THROWS_AS(split_dataset(tiny, 0.5, 1), ContractError);

    auto two = brightness_dataset(2, 17);
    auto [tr, te] = split_dataset(two, 0.5, 1);
    CHECK(tr.size() == 2);  // one per class
    CHECK(te.size() == 2);
    CHECK_THROWS_AS(split_dataset(two, 0.0, 1), ContractError);
    CHECK_THROWS_AS(split_dataset(two, 1.0, 1), ContractError);
}

TEST_CASE("training fits a linearly separable toy task") {
    auto ds = brightness_dataset(40, 18);
    auto [train_set, test_set] = split_dataset(ds, 0.75, 5);
    auto f = make_fixture(2, 1, 19);
    TrainOptions opt;
    opt.budget = {120, 10};
    opt.schedule = {0.02, 0.1, 40};
    opt.seed = 20;
    opt.augment.pad = 1;
    TrainResult r = train(f.net, f.plan, train_set, test_set, opt);
    REQUIRE(!r.trace.empty());
    CHECK(r.trace.back().test_acc >= 0.95);
    CHECK(r.trace.back().train_acc >= 0.95);
}

TEST_CASE("zero iterations leave the model identical to its initialization") {
    auto ds = brightness_dataset(8, 21);
    auto f = make_fixture(2, 1, 22);
    auto before = snapshot_params(f.net);
    TrainOptions opt;
    opt.budget = {0, 4};
    TrainResult r = train(f.net, f.plan, full_set(ds), full_set(ds), opt);
    CHECK(r.trace.empty());
    CHECK(snapshot_params(f.net) == before);
}

TEST_CASE("same seed gives identical metric traces and parameters") {
    auto ds = brightness_dataset(16, 23);
    auto run = [&](std::uint64_t seed) {
        auto f = make_fixture(2, 2, 24);
        TrainOptions opt;
        opt.budget = {30, 8};
        opt.seed = seed;
        TrainResult r = train(f.net, f.plan, full_set(ds), full_set(ds), opt);
        return std::pair{r, snapshot_params(f.net)};
    };
    auto [ra, pa] = run(31);
    auto [rb, pb] = run(31);
    REQUIRE(ra.trace.size() == rb.trace.size());
    for (std::size_t i = 0; i < ra.trace.size(); ++i) {
        CHECK(ra.trace[i].loss == rb.trace[i].loss);
        CHECK(ra.trace[i].test_acc == rb.trace[i].test_acc);
    }
    CHECK(pa == pb);
    auto [rc, pc] = run(32);
    CHECK(pc != pa);
}

TEST_CASE("frozen units stay bit-identical through training") {
    auto ds = brightness_dataset(16, 25);
    for (std::int64_t nu : {2, 4}) {
        auto f = make_fixture(2, nu, 26);
        auto before = snapshot_params(f.net);
        TrainOptions opt;
        opt.budget = {25, 8};
        opt.seed = 27;
        train(f.net, f.plan, full_set(ds), full_set(ds), opt);
        std::size_t slot = 0;
        bool trainable_changed = false;
        for_each_param(f.net, [&](Tensor& p, std::int64_t unit) {
            const bool trainable = unit < 0 || f.plan.trainable[std::size_t(unit)];
            if (!trainable) {
                CHECK(p.data == before[slot]);
            } else if (p.data != before[slot]) {
                trainable_changed = true;
            }
            ++slot;
        });
        CHECK(trainable_changed);
    }
}

TEST_CASE("frozen appended units keep their standardization state bit-identical") {
    // two appended units, tuning only the upper one: the lower unit's BatchStd
    // must run in eval mode so its running stats never move
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 12;
    spec.height = 8;
    spec.width = 8;
    spec.channels = 1;
    spec.seed = 30;
    auto ds = std::make_shared<Dataset>(generate_shapes(spec));

    Rng rng(31);
    auto chi = build_source_network("toy4", {1, 8, 8}, 3, rng);
    TlnConfig cfg;
    cfg.tau = 2;
    cfg.sizes = {12, 8};
    cfg.norm = NormScheme::BatchStd;
    cfg.target_classes = 2;
    cfg.nu = Ref{false, 6};  // only L_N+2 (unit 6 of 6) and psi train
    Tln net = instantiate(chi, cfg, 32);
    FreezePlan plan = make_freeze_plan(net, 6);

    const Unit& frozen_aug = net.units[4];  // L_N+1
    REQUIRE(frozen_aug.name == "L_N+1");
    auto rm_before = frozen_aug.layers[0].params.running_mean.data;
    auto rv_before = frozen_aug.layers[0].params.running_var.data;
    auto gamma_before = frozen_aug.layers[1].params.gamma.data;

    TrainOptions opt;
    opt.budget = {20, 8};
    opt.seed = 33;
    train(net, plan, full_set(ds), full_set(ds), opt);

    CHECK(net.units[4].layers[0].params.running_mean.data == rm_before);
    CHECK(net.units[4].layers[0].params.running_var.data == rv_before);
    CHECK(net.units[4].layers[1].params.gamma.data == gamma_before);
    // while the trainable appended unit's stats did move off their (0,1) init
    const auto& live_rm = net.units[5].layers[0].params.running_mean.data;
    CHECK(live_rm != std::vector<double>(live_rm.size(), 0.0));
}

TEST_CASE("training aborts on non-finite loss naming the iteration") {
    auto ds = brightness_dataset(8, 28);
    auto f = make_fixture(2, 1, 29);
    TrainOptions opt;
    opt.budget = {50, 4};
    opt.schedule.base_lr = 1e30;  // guaranteed blow-up
    try {
        train(f.net, f.plan, full_set(ds), full_set(ds), opt);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
        CHECK(e.index >= 0);
    }
}

TEST_CASE("evaluate") {
    auto ds = brightness_dataset(20, 33);
    auto f = make_fixture(2, 1, 34);
    Augmentor aug({0, 0, 0, 0.0}, ds->channel_mean, ds->channel_std);

    // constant predictor: zero logits except a bias on class 1
    for_each_param(f.net, [](Tensor& p, std::int64_t) {
        std::fill(p.data.begin(), p.data.end(), 0.0);
    });
    f.net.psi[0].params.bias.data[1] = 5.0;
    SampleSet bright;
    bright.data = ds;
    for (std::int64_t i = 0; i < ds->count(); ++i) {
        if (ds->labels[std::size_t(i)] == 1) bright.idx.push_back(i);
    }
    CHECK(evaluate(f.net, bright, aug) == 1.0);

    SampleSet empty;
    empty.data = ds;
    CHECK_THROWS_AS(evaluate(f.net, empty, aug), ContractError);
}

TEST_CASE("an untrained network scores at chance on a balanced set") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 400;
    spec.seed = 35;
    auto ds = std::make_shared<Dataset>(generate_shapes(spec));
    Rng rng(36);
    auto chi = build_source_network("toy4", {3, 16, 16}, 4, rng);
    TlnConfig cfg;
    cfg.nu = Ref{false, 1};
    cfg.target_classes = 4;
    Tln net = instantiate(chi, cfg, 37);
    Augmentor aug({0, 0, 0, 0.0}, ds->channel_mean, ds->channel_std);
    const double acc = evaluate(net, full_set(ds), aug);
    CHECK(acc == doctest::Approx(0.25).epsilon(0.2));  // 0.25 +- 0.05
}

TEST_CASE("metric records are line-delimited json with the six fields") {
    std::ostringstream os;
    write_metrics(os, {12, 1, 0.005, 0.7, 0.5, 0.45});
    auto j = nlohmann::json::parse(os.str());
    CHECK(j["iteration"] == 12);
    CHECK(j["epoch"] == 1);
    CHECK(j["lr"] == 0.005);
    CHECK(j["loss"] == 0.7);
    CHECK(j["train_acc"] == 0.5);
    CHECK(j["test_acc"] == 0.45);
    CHECK(os.str().back() == '\n');
}
