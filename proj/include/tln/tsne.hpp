#pragma once

#include <string>
#include <vector>

#include "tln/data.hpp"
#include "tln/network.hpp"

namespace tln {

// Rows of features with per-row provenance tags.
struct FeatureMatrix {
    Tensor rows;                       // [n, d]
    std::vector<std::string> origin;   // dataset-of-origin per row
    std::vector<std::int64_t> sample_id;

    std::int64_t count() const { return rows.ndim() == 2 ? rows.shape[0] : 0; }
    std::int64_t dim() const { return rows.ndim() == 2 ? rows.shape[1] : 0; }
    void validate() const;  // finite entries, tags match rows
};

// Eval-mode forward of every sample to the named layer's output (pre-softmax
// for the classification layers); post_softmax applies a row softmax on top.
FeatureMatrix extract_features(Tln& net, const SampleSet& ds, const std::string& layer_name,
                               bool post_softmax = false, std::int64_t batch = 64);

// Appends rows of `more` to `base` (same feature width).
void append_features(FeatureMatrix& base, const FeatureMatrix& more);

Tensor pairwise_sq_distances(const Tensor& rows);  // [n,n], zero diagonal

// Per-row binary search of the Gaussian precision until the conditional
// distribution's entropy matches log2(perplexity) within 1e-5 (at most 50
// halvings); rows of the result sum to 1.
Tensor conditional_affinities(const Tensor& sq_distances, double perplexity);

// P = (C + C^T) / (2n); sums to 1.
Tensor symmetrized_affinities(const Tensor& conditional);

struct TsneOptions {
    std::int64_t iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t seed = 1;
    double early_exaggeration = 12.0;
    std::int64_t exaggeration_until = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::int64_t momentum_switch = 250;
};

struct Embedding {
    Tensor points;  // [n, 2]
    double final_kl = 0.0;
    std::vector<double> kl_trace;  // KL(P||Q) against the true P, per iteration
};

// Exact t-SNE gradient descent with momentum switching, gain adaptation and
// early exaggeration; deterministic per seed.
Embedding tsne_embed(const Tensor& p_joint, const TsneOptions& options);

// KL(P||Q) recomputed from coordinates (the oracle for reported values).
double tsne_kl(const Tensor& p_joint, const Tensor& points);

// Fraction of rows whose nearest neighbor shares their origin tag.
double knn_origin_purity(const Tensor& points, const std::vector<std::string>& origin);

}  // namespace tln
