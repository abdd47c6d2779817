#include "tln/sweep.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "tln/error.hpp"

namespace tln {

void SweepConfig::validate() const {
    if (variants.empty()) throw ContractError("sweep needs at least one variant");
    if (repeats < 1) throw ContractError("sweep repeats must be >= 1");
    if (jobs < 1) throw ContractError("sweep jobs must be >= 1");
    budget.validate();
    schedule.validate();
    for (const auto& v : variants) {
        if (v.label.empty()) throw ContractError("sweep variant without a label");
    }
}

std::vector<std::int64_t> generate_setups(std::int64_t total_units) {
    if (total_units < 1) throw ContractError("network has no units to sweep");
    std::vector<std::int64_t> nus;
    for (std::int64_t nu = total_units; nu >= 1; --nu) nus.push_back(nu);
    return nus;
}

std::vector<std::int64_t> generate_setups(const Tln& net) {
    return generate_setups(net.total_units());
}

const SweepResult::VariantResult& SweepResult::variant(const std::string& label) const {
    for (const auto& v : variants) {
        if (v.label == label) return v;
    }
    throw ContractError("variant '" + label + "' not present in sweep result");
}

const SweepCell& SweepResult::cell(const std::string& label, std::int64_t nu,
                                   std::int64_t repeat) const {
    const auto& v = variant(label);
    for (std::size_t i = 0; i < v.nus.size(); ++i) {
        if (v.nus[i] == nu) {
            if (repeat < 0 || repeat >= std::int64_t(v.cells[i].size())) {
                throw ContractError("repeat " + std::to_string(repeat) + " missing for '" + label +
                                    "' at nu=" + std::to_string(nu));
            }
            return v.cells[i][std::size_t(repeat)];
        }
    }
    throw ContractError("nu=" + std::to_string(nu) + " missing for variant '" + label + "'");
}

double SweepResult::mean_accuracy(const std::string& label, std::int64_t nu) const {
    const auto& v = variant(label);
    for (std::size_t i = 0; i < v.nus.size(); ++i) {
        if (v.nus[i] == nu) {
            double acc = 0.0;
            if (v.cells[i].empty()) throw ContractError("empty cell list");
            for (const auto& c : v.cells[i]) acc += c.accuracy;
            return acc / double(v.cells[i].size());
        }
    }
    throw ContractError("nu=" + std::to_string(nu) + " missing for variant '" + label + "'");
}

std::uint64_t cell_seed(std::uint64_t master_seed, std::int64_t variant_index,
                        std::int64_t repeat) {
    return mix_seed(mix_seed(master_seed, std::uint64_t(variant_index) + 1),
                    std::uint64_t(repeat) + 1);
}

Tln build_cell(const SweepConfig& config, const PretrainedNetwork& chi, std::int64_t variant_index,
               std::int64_t repeat, std::int64_t nu) {
    const SweepVariant& variant = config.variants[std::size_t(variant_index)];
    const std::uint64_t seed = cell_seed(config.master_seed, variant_index, repeat);
    TlnConfig cfg = variant.config;
    cfg.nu = Ref{false, nu};
    Tln net = instantiate(chi, cfg, seed);
    if (variant.random_init) {
        Rng rng(mix_seed(seed, 0xbadc0de));
        reinitialize(net, rng);
    }
    return net;
}

SweepResult run_sweep(const SweepConfig& config, const PretrainedNetwork& chi,
                      const SampleSet& train_set, const SampleSet& test_set) {
    config.validate();
    SweepResult result;
    result.config = config;

    struct Job {
        std::int64_t variant, nu_index, nu, repeat;
    };
    std::vector<Job> jobs;
    for (std::int64_t vi = 0; vi < std::int64_t(config.variants.size()); ++vi) {
        TlnConfig cfg = config.variants[std::size_t(vi)].config;
        cfg.nu = Ref{false, 1};
        cfg.validate(chi.depth());
        const std::int64_t total = cfg.kappa.resolve(chi.depth()) + cfg.tau;
        SweepResult::VariantResult vr;
        vr.label = config.variants[std::size_t(vi)].label;
        vr.nus = generate_setups(total);
        vr.cells.assign(vr.nus.size(), std::vector<SweepCell>(std::size_t(config.repeats)));
        for (std::int64_t ni = 0; ni < std::int64_t(vr.nus.size()); ++ni) {
            for (std::int64_t r = 0; r < config.repeats; ++r) {
                jobs.push_back({vi, ni, vr.nus[std::size_t(ni)], r});
            }
        }
        result.variants.push_back(std::move(vr));
    }

    std::atomic<std::size_t> next{0};
    std::mutex fail_mutex;
    std::string failure;
    std::int64_t failure_index = -1;

    auto worker = [&]() {
        for (;;) {
            const std::size_t at = next.fetch_add(1);
            if (at >= jobs.size()) return;
            const Job& job = jobs[at];
            {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failure.empty()) return;  // stop scheduling after a failure
            }
            try {
                Tln net = build_cell(config, chi, job.variant, job.repeat, job.nu);
                FreezePlan plan = make_freeze_plan(net, job.nu);
                TrainOptions opt;
                opt.budget = config.budget;
                opt.schedule = config.schedule;
                opt.momentum = config.momentum;
                opt.augment = config.augment;
                opt.eval_train = false;
                opt.seed = cell_seed(config.master_seed, job.variant, job.repeat);
                SweepCell cell;
                cell.trace = train(net, plan, train_set, test_set, opt).trace;
                Augmentor aug(config.augment, train_set.data->channel_mean,
                              train_set.data->channel_std);
                cell.accuracy = evaluate(net, test_set, aug);
                result.variants[std::size_t(job.variant)]
                    .cells[std::size_t(job.nu_index)][std::size_t(job.repeat)] = std::move(cell);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (failure.empty()) {
                    failure = "sweep cell (variant '" +
                              config.variants[std::size_t(job.variant)].label +
                              "', nu=" + std::to_string(job.nu) +
                              ", repeat=" + std::to_string(job.repeat) + ") failed: " + e.what();
                    failure_index = job.nu;
                }
            }
        }
    };

    const std::int64_t nworkers = std::min<std::int64_t>(config.jobs, std::int64_t(jobs.size()));
    if (nworkers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(std::size_t(nworkers));
        for (std::int64_t i = 0; i < nworkers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (!failure.empty()) throw NumericError(failure, failure_index);
    return result;
}

double gain_points(const SweepResult& result, const std::string& baseline,
                   const std::string& target, std::int64_t nu) {
    return (result.mean_accuracy(target, nu) - result.mean_accuracy(baseline, nu)) * 100.0;
}

std::pair<std::int64_t, double> best_setup(const SweepResult& result, const std::string& label) {
    const auto& v = result.variant(label);
    std::int64_t best_nu = -1;
    double best_acc = -1.0;
    for (std::size_t i = 0; i < v.nus.size(); ++i) {
        const double acc = result.mean_accuracy(label, v.nus[i]);
        // strict >: ties keep the earlier (larger) nu in the descending list
        if (acc > best_acc || (acc == best_acc && v.nus[i] > best_nu)) {
            best_acc = acc;
            best_nu = v.nus[i];
        }
    }
    return {best_nu, best_acc};
}

double accuracy_ci95(const SweepResult& result, const std::string& label, std::int64_t nu) {
    const auto& v = result.variant(label);
    for (std::size_t i = 0; i < v.nus.size(); ++i) {
        if (v.nus[i] != nu) continue;
        const auto& cells = v.cells[i];
        const double n = double(cells.size());
        if (cells.size() < 2) return 0.0;
        double mean = 0.0;
        for (const auto& c : cells) mean += c.accuracy;
        mean /= n;
        double var = 0.0;
        for (const auto& c : cells) var += (c.accuracy - mean) * (c.accuracy - mean);
        var /= (n - 1.0);
        return 1.96 * std::sqrt(var / n);
    }
    throw ContractError("nu=" + std::to_string(nu) + " missing for variant '" + label + "'");
}

}  // namespace tln
