#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tln/error.hpp"
#include "tln/sweep.hpp"
#include "tln/synth.hpp"

using namespace tln;

namespace {

std::shared_ptr<Dataset> tiny_dataset(std::uint64_t seed) {
    auto ds = std::make_shared<Dataset>();
    ds->name = "tiny";
    ds->class_names = {"dark", "bright"};
    ds->channels = 1;
    ds->height = 8;
    ds->width = 8;
    Rng rng(seed);
    for (std::int64_t k = 0; k < 2; ++k) {
        for (std::int64_t i = 0; i < 16; ++i) {
            for (std::int64_t j = 0; j < 64; ++j) {
                const double v = k == 0 ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
                ds->pixels.push_back(std::uint8_t(v * 255.0));
            }
            ds->labels.push_back(std::uint8_t(k));
        }
    }
    ds->compute_channel_stats();
    return ds;
}

SweepConfig tiny_config(std::int64_t jobs) {
    SweepConfig cfg;
    SweepVariant proposed;
    proposed.label = "proposed";
    proposed.config.kappa = Ref{true, 0};
    proposed.config.target_classes = 2;
    SweepVariant traditional;
    traditional.label = "traditional";
    traditional.config.kappa = Ref{true, 1};
    traditional.config.target_classes = 2;
    cfg.variants = {proposed, traditional};
    cfg.master_seed = 71;
    cfg.repeats = 3;
    cfg.budget = {2, 8};
    cfg.schedule = {0.01, 0.1, 10};
    cfg.augment.pad = 1;
    cfg.dataset_id = "tiny";
    cfg.jobs = jobs;
    return cfg;
}

PretrainedNetwork tiny_chi() {
    Rng rng(5);
    return build_source_network("toy4", {1, 8, 8}, 3, rng);
}

bool results_identical(const SweepResult& a, const SweepResult& b) {
    if (a.variants.size() != b.variants.size()) return false;
    for (std::size_t v = 0; v < a.variants.size(); ++v) {
        if (a.variants[v].nus != b.variants[v].nus) return false;
        for (std::size_t n = 0; n < a.variants[v].cells.size(); ++n) {
            for (std::size_t r = 0; r < a.variants[v].cells[n].size(); ++r) {
                const auto& ca = a.variants[v].cells[n][r];
                const auto& cb = b.variants[v].cells[n][r];
                if (ca.accuracy != cb.accuracy) return false;
                if (ca.trace.size() != cb.trace.size()) return false;
                for (std::size_t t = 0; t < ca.trace.size(); ++t) {
                    if (ca.trace[t].loss != cb.trace[t].loss) return false;
                    if (ca.trace[t].test_acc != cb.trace[t].test_acc) return false;
                }
            }
        }
    }
    return true;
}

}  // namespace

TEST_CASE("generate_setups descends from the last unit to 1") {
    CHECK(generate_setups(8) == std::vector<std::int64_t>{8, 7, 6, 5, 4, 3, 2, 1});
    CHECK(generate_setups(9).size() == 9);  // one appended unit: K grows by one
    CHECK(generate_setups(9).front() == 9);
    CHECK(generate_setups(9).back() == 1);
    CHECK(generate_setups(1) == std::vector<std::int64_t>{1});
    CHECK_THROWS_AS(generate_setups(0), ContractError);
}

TEST_CASE("initial parameters are identical across setups for a repeat seed") {
    auto chi = tiny_chi();
    SweepConfig cfg = tiny_config(1);
    for (std::int64_t repeat = 0; repeat < 2; ++repeat) {
        Tln a = build_cell(cfg, chi, 0, repeat, 1);
        Tln b = build_cell(cfg, chi, 0, repeat, 4);
        bool same = true;
        std::vector<std::vector<double>> pa, pb;
        for_each_param(a, [&pa](Tensor& p, std::int64_t) { pa.push_back(p.data); });
        for_each_param(b, [&pb](Tensor& p, std::int64_t) { pb.push_back(p.data); });
        same = pa == pb;
        CHECK(same);
    }
    // different repeats draw different new-layer parameters
    Tln r0 = build_cell(cfg, chi, 0, 0, 1);
    Tln r1 = build_cell(cfg, chi, 0, 1, 1);
    CHECK(r0.psi[0].params.weight.data != r1.psi[0].params.weight.data);
}

TEST_CASE("sweep matrix is complete; rerun and parallel runs are bit-identical") {
    auto ds = tiny_dataset(6);
    auto [train_set, test_set] = split_dataset(ds, 0.5, 7);
    auto chi = tiny_chi();

    SweepConfig serial_cfg = tiny_config(1);
    SweepResult serial = run_sweep(serial_cfg, chi, train_set, test_set);

    // completeness: proposed sweeps nu in [4..1], traditional in [3..1], 3 repeats
    REQUIRE(serial.variants.size() == 2);
    CHECK(serial.variants[0].nus == std::vector<std::int64_t>{4, 3, 2, 1});
    CHECK(serial.variants[1].nus == std::vector<std::int64_t>{3, 2, 1});
    std::int64_t cells = 0;
    for (const auto& v : serial.variants) {
        for (const auto& per_nu : v.cells) {
            CHECK(per_nu.size() == 3);
            for (const auto& c : per_nu) {
                CHECK(c.accuracy >= 0.0);
                CHECK(c.accuracy <= 1.0);
                CHECK(!c.trace.empty());
                ++cells;
            }
        }
    }
    CHECK(cells == (4 + 3) * 3);

    SweepResult again = run_sweep(serial_cfg, chi, train_set, test_set);
    CHECK(results_identical(serial, again));

    SweepConfig parallel_cfg = tiny_config(4);
    SweepResult parallel = run_sweep(parallel_cfg, chi, train_set, test_set);
    CHECK(results_identical(serial, parallel));

    // a different master seed changes the outcome
    SweepConfig other = tiny_config(1);
    other.master_seed = 72;
    SweepResult changed = run_sweep(other, chi, train_set, test_set);
    CHECK_FALSE(results_identical(serial, changed));
}

TEST_CASE("gain computation") {
    SweepResult r;
    SweepResult::VariantResult a, b;
    a.label = "baseline";
    a.nus = {2, 1};
    a.cells = {{{0.62, {}}}, {{0.5, {}}}};
    b.label = "target";
    b.nus = {2, 1};
    b.cells = {{{0.65, {}}}, {{0.52, {}}}};
    r.variants = {a, b};

    CHECK(gain_points(r, "baseline", "target", 2) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(gain_points(r, "baseline", "baseline", 2) == 0.0);  // self-comparison is exactly zero
    // antisymmetry
    CHECK(gain_points(r, "baseline", "target", 1) == -gain_points(r, "target", "baseline", 1));
    CHECK_THROWS_AS(gain_points(r, "baseline", "missing", 2), ContractError);
    CHECK_THROWS_AS(gain_points(r, "baseline", "target", 9), ContractError);
}

TEST_CASE("best_setup argmax with ties to the larger nu") {
    SweepResult r;
    SweepResult::VariantResult v;
    v.label = "x";
    v.nus = {4, 3, 2, 1};

    v.cells = {{{0.1, {}}}, {{0.2, {}}}, {{0.3, {}}}, {{0.4, {}}}};  // monotone toward nu=1
    r.variants = {v};
    CHECK(best_setup(r, "x") == std::pair<std::int64_t, double>{1, 0.4});

    r.variants[0].cells = {{{0.3, {}}}, {{0.3, {}}}, {{0.3, {}}}, {{0.3, {}}}};  // all equal
    CHECK(best_setup(r, "x").first == 4);

    // planted peak at N-5 of an 8-unit sweep
    SweepResult::VariantResult w;
    w.label = "planted";
    w.nus = generate_setups(8);
    for (std::int64_t nu : w.nus) {
        w.cells.push_back({{nu == 3 ? 0.9 : 0.5, {}}});
    }
    r.variants = {w};
    CHECK(best_setup(r, "planted").first == 3);
}

TEST_CASE("confidence interval over repeats") {
    SweepResult r;
    SweepResult::VariantResult v;
    v.label = "x";
    v.nus = {1};
    v.cells = {{{0.5, {}}, {0.6, {}}, {0.7, {}}}};
    r.variants = {v};
    // sd = 0.1, se = 0.1/sqrt(3), ci = 1.96*se
    CHECK(accuracy_ci95(r, "x", 1) == doctest::Approx(1.96 * 0.1 / std::sqrt(3.0)).epsilon(1e-9));
    CHECK(r.mean_accuracy("x", 1) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("a failing cell aborts the sweep naming the cell") {
    auto ds = tiny_dataset(8);
    // labels outside the target classifier's range abort every cell
    auto posed = std::make_shared<Dataset>(*ds);
    posed->class_names = {"a", "b", "c", "d"};
    std::fill(posed->labels.begin(), posed->labels.end(), std::uint8_t(3));
    auto chi = tiny_chi();
    SweepConfig cfg = tiny_config(2);
    try {
        run_sweep(cfg, chi, full_set(posed), full_set(posed));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nu=") != std::string::npos);
        CHECK(msg.find("repeat=") != std::string::npos);
        CHECK(msg.find("variant") != std::string::npos);
    }
}
