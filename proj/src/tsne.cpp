#include "tln/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tln/error.hpp"

namespace tln {

void FeatureMatrix::validate() const {
    if (rows.ndim() != 2) throw DimensionError("feature matrix must be [n,d]");
    for (double v : rows.data) {
        if (!std::isfinite(v)) throw ContractError("feature matrix contains non-finite entries");
    }
    if (origin.size() != std::size_t(count()) || sample_id.size() != std::size_t(count())) {
        throw ContractError("feature matrix tags do not match row count");
    }
}

FeatureMatrix extract_features(Tln& net, const SampleSet& ds, const std::string& layer_name,
                               bool post_softmax, std::int64_t batch) {
    if (ds.size() == 0) throw ContractError("extract_features on empty dataset");
    // fail fast on unknown names (with the available list) before any work
    {
        const auto names = net.layer_names();
        if (std::find(names.begin(), names.end(), layer_name) == names.end()) {
            std::string known;
            for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
            throw ContractError("unknown layer '" + layer_name + "'; available: " + known);
        }
    }
    FeatureMatrix out;
    out.origin.assign(std::size_t(ds.size()), ds.data->name);
    out.sample_id.resize(std::size_t(ds.size()));
    for (std::int64_t i = 0; i < ds.size(); ++i) out.sample_id[std::size_t(i)] = ds.idx[std::size_t(i)];

    Augmentor aug({0, 0, 0, 0.0}, ds.data->channel_mean, ds.data->channel_std);
    std::vector<double> all;
    std::int64_t dim = -1;
    for (std::int64_t start = 0; start < ds.size(); start += batch) {
        const std::int64_t take = std::min(batch, ds.size() - start);
        Shape s{take};
        Tensor first = aug.eval(ds.image(start));
        for (auto d : first.shape) s.push_back(d);
        Tensor stacked = Tensor::zeros(s);
        std::copy(first.data.begin(), first.data.end(), stacked.data.begin());
        for (std::int64_t i = 1; i < take; ++i) {
            Tensor img = aug.eval(ds.image(start + i));
            std::copy(img.data.begin(), img.data.end(),
                      stacked.data.begin() + std::size_t(i) * img.data.size());
        }
        Tape tape;
        Var tapped = net.forward_to(tape, tape.constant(std::move(stacked)), layer_name, Mode::Eval);
        Tensor rows = tape.val(tapped);
        const std::int64_t d = rows.size() / take;
        if (dim < 0) dim = d;
        if (post_softmax) {
            for (std::int64_t r = 0; r < take; ++r) {
                double* row = rows.data.data() + r * d;
                double mx = row[0];
                for (std::int64_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
                double sum = 0.0;
                for (std::int64_t c = 0; c < d; ++c) {
                    row[c] = std::exp(row[c] - mx);
                    sum += row[c];
                }
                for (std::int64_t c = 0; c < d; ++c) row[c] /= sum;
            }
        }
        all.insert(all.end(), rows.data.begin(), rows.data.end());
    }
    out.rows = Tensor({ds.size(), dim}, std::move(all));
    out.validate();
    return out;
}

void append_features(FeatureMatrix& base, const FeatureMatrix& more) {
    if (base.count() == 0) {
        base = more;
        return;
    }
    if (base.dim() != more.dim()) {
        throw DimensionError("feature widths disagree: " + std::to_string(base.dim()) + " vs " +
                             std::to_string(more.dim()));
    }
    base.rows.shape[0] += more.count();
    base.rows.data.insert(base.rows.data.end(), more.rows.data.begin(), more.rows.data.end());
    base.origin.insert(base.origin.end(), more.origin.begin(), more.origin.end());
    base.sample_id.insert(base.sample_id.end(), more.sample_id.begin(), more.sample_id.end());
}

Tensor pairwise_sq_distances(const Tensor& rows) {
    if (rows.ndim() != 2) throw DimensionError("pairwise distances expect [n,d]");
    const std::int64_t n = rows.shape[0], d = rows.shape[1];
    Tensor out = Tensor::zeros({n, n});
    for (std::int64_t i = 0; i < n; ++i) {
        const double* ri = rows.data.data() + i * d;
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double* rj = rows.data.data() + j * d;
            double acc = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                const double diff = ri[k] - rj[k];
                acc += diff * diff;
            }
            out.data[std::size_t(i * n + j)] = acc;
            out.data[std::size_t(j * n + i)] = acc;
        }
    }
    return out;
}

Tensor conditional_affinities(const Tensor& sq_distances, double perplexity) {
    if (sq_distances.ndim() != 2 || sq_distances.shape[0] != sq_distances.shape[1]) {
        throw DimensionError("distance matrix must be square");
    }
    const std::int64_t n = sq_distances.shape[0];
    if (!(perplexity > 1.0 && perplexity < double(n))) {
        throw ContractError("perplexity must lie in (1, n); got " + std::to_string(perplexity) +
                            " for n=" + std::to_string(n));
    }
    const double target_entropy = std::log(perplexity);  // nats
    Tensor p = Tensor::zeros({n, n});

    for (std::int64_t i = 0; i < n; ++i) {
        double beta = 1.0;
        double beta_lo = -std::numeric_limits<double>::max();
        double beta_hi = std::numeric_limits<double>::max();
        const double* drow = sq_distances.data.data() + i * n;
        double* prow = p.data.data() + i * n;
        bool converged = false;
        for (int iter = 0; iter < 50; ++iter) {
            double sum = 0.0, dist_moment = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                if (j == i) {
                    prow[j] = 0.0;
                    continue;
                }
                prow[j] = std::exp(-beta * drow[j]);
                sum += prow[j];
                dist_moment += drow[j] * prow[j];
            }
            if (sum <= 0.0) {
                beta_hi = beta;
                beta = (beta_lo == -std::numeric_limits<double>::max()) ? beta / 2.0
                                                                        : (beta + beta_lo) / 2.0;
                continue;
            }
            const double entropy = std::log(sum) + beta * dist_moment / sum;
            const double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-5) {
                for (std::int64_t j = 0; j < n; ++j) prow[j] /= sum;
                converged = true;
                break;
            }
            if (diff > 0.0) {
                beta_lo = beta;
                beta = (beta_hi == std::numeric_limits<double>::max()) ? beta * 2.0
                                                                       : (beta + beta_hi) / 2.0;
            } else {
                beta_hi = beta;
                beta = (beta_lo == -std::numeric_limits<double>::max()) ? beta / 2.0
                                                                        : (beta + beta_lo) / 2.0;
            }
        }
        if (!converged) {
            throw NumericError("perplexity search did not converge for row " + std::to_string(i),
                               i);
        }
    }
    return p;
}

Tensor symmetrized_affinities(const Tensor& conditional) {
    const std::int64_t n = conditional.shape[0];
    Tensor p = Tensor::zeros({n, n});
    const double scale = 1.0 / (2.0 * double(n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            p.data[std::size_t(i * n + j)] =
                (conditional.data[std::size_t(i * n + j)] + conditional.data[std::size_t(j * n + i)]) *
                scale;
        }
    }
    return p;
}

namespace {

// Student-t affinity numerators and their sum for current coordinates.
void student_t_kernel(const Tensor& y, Tensor& num, double& sum) {
    const std::int64_t n = y.shape[0];
    sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        num.data[std::size_t(i * n + i)] = 0.0;
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double dx = y.at2(i, 0) - y.at2(j, 0);
            const double dy = y.at2(i, 1) - y.at2(j, 1);
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            num.data[std::size_t(i * n + j)] = q;
            num.data[std::size_t(j * n + i)] = q;
            sum += 2.0 * q;
        }
    }
}

double kl_from_kernel(const Tensor& p, const Tensor& num, double sum) {
    const std::int64_t n = p.shape[0];
    double kl = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            const double pij = p.data[std::size_t(i * n + j)];
            if (pij <= 0.0 || i == j) continue;
            const double qij = std::max(num.data[std::size_t(i * n + j)] / sum,
                                        std::numeric_limits<double>::min());
            kl += pij * std::log(pij / qij);
        }
    }
    return std::max(kl, 0.0);
}

}  // namespace

double tsne_kl(const Tensor& p_joint, const Tensor& points) {
    const std::int64_t n = p_joint.shape[0];
    Tensor num = Tensor::zeros({n, n});
    double sum = 0.0;
    student_t_kernel(points, num, sum);
    return kl_from_kernel(p_joint, num, sum);
}

Embedding tsne_embed(const Tensor& p_joint, const TsneOptions& options) {
    if (p_joint.ndim() != 2 || p_joint.shape[0] != p_joint.shape[1]) {
        throw DimensionError("affinity matrix must be square");
    }
    const std::int64_t n = p_joint.shape[0];
    if (n < 2) throw ContractError("embedding needs at least 2 points");
    {
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                const double v = p_joint.data[std::size_t(i * n + j)];
                if (v < 0.0) throw ContractError("affinities must be non-negative");
                if (std::abs(v - p_joint.data[std::size_t(j * n + i)]) > 1e-12) {
                    throw ContractError("affinity matrix must be symmetric");
                }
                total += v;
            }
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw ContractError("affinities must sum to 1, got " + std::to_string(total));
        }
    }

    Tensor p = p_joint;
    for (auto& v : p.data) v *= options.early_exaggeration;

    Rng rng(mix_seed(options.seed, 0x75e));
    Tensor y = Tensor::zeros({n, 2});
    for (auto& v : y.data) v = rng.gaussian() * 1e-4;

    std::vector<double> velocity(std::size_t(n * 2), 0.0);
    std::vector<double> gain(std::size_t(n * 2), 1.0);
    Tensor num = Tensor::zeros({n, n});
    std::vector<double> grad(std::size_t(n * 2));
    double momentum = options.momentum_initial;

    Embedding out;
    out.kl_trace.reserve(std::size_t(options.iterations));

    for (std::int64_t iter = 0; iter < options.iterations; ++iter) {
        double sum = 0.0;
        student_t_kernel(y, num, sum);

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = num.data[std::size_t(i * n + j)];
                const double mult = (p.data[std::size_t(i * n + j)] - q / sum) * q;
                grad[std::size_t(2 * i)] += 4.0 * mult * (y.at2(i, 0) - y.at2(j, 0));
                grad[std::size_t(2 * i + 1)] += 4.0 * mult * (y.at2(i, 1) - y.at2(j, 1));
            }
        }

        auto sgn = [](double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
        for (std::size_t k = 0; k < grad.size(); ++k) {
            gain[k] = sgn(grad[k]) != sgn(velocity[k]) ? gain[k] + 0.2 : gain[k] * 0.8;
            gain[k] = std::max(gain[k], 0.1);
            velocity[k] = momentum * velocity[k] - options.learning_rate * gain[k] * grad[k];
            y.data[k] += velocity[k];
            if (!std::isfinite(y.data[k])) {
                throw NumericError("non-finite coordinate at iteration " + std::to_string(iter),
                                   iter);
            }
        }
        // recenter (the objective is translation invariant)
        double mx = 0.0, my = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            mx += y.at2(i, 0);
            my += y.at2(i, 1);
        }
        mx /= double(n);
        my /= double(n);
        for (std::int64_t i = 0; i < n; ++i) {
            y.at2(i, 0) -= mx;
            y.at2(i, 1) -= my;
        }

        if (iter + 1 == options.exaggeration_until) {
            for (auto& v : p.data) v /= options.early_exaggeration;
        }
        if (iter + 1 == options.momentum_switch) momentum = options.momentum_final;

        out.kl_trace.push_back(tsne_kl(p_joint, y));
    }

    out.points = std::move(y);
    out.final_kl = out.kl_trace.empty() ? tsne_kl(p_joint, out.points) : out.kl_trace.back();
    return out;
}

double knn_origin_purity(const Tensor& points, const std::vector<std::string>& origin) {
    const std::int64_t n = points.shape[0];
    if (origin.size() != std::size_t(n)) throw ContractError("origin tags do not match points");
    if (n < 2) throw ContractError("purity needs at least 2 points");
    std::int64_t pure = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        std::int64_t who = -1;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = points.at2(i, 0) - points.at2(j, 0);
            const double dy = points.at2(i, 1) - points.at2(j, 1);
            const double d = dx * dx + dy * dy;
            if (d < best) {
                best = d;
                who = j;
            }
        }
        if (origin[std::size_t(who)] == origin[std::size_t(i)]) ++pure;
    }
    return double(pure) / double(n);
}

}  // namespace tln
