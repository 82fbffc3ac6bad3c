#pragma once

#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/rng.hpp"

namespace bslwg {

/// Mixture of normals with per-component lower Cholesky factors of the
/// covariances. Immutable once fitted; safe to share across threads.
struct GaussianMixture {
    Vector weights;              // K, simplex
    std::vector<Vector> means;   // K x d
    std::vector<Matrix> chols;   // K lower-triangular d x d
    std::vector<double> logdets; // K

    int components() const { return static_cast<int>(means.size()); }
    Eigen::Index dim() const { return means.empty() ? 0 : means[0].size(); }

    /// The standard normal in d dimensions (the flow target).
    static GaussianMixture standard_normal(Eigen::Index d);
};

struct EmConfig {
    double tol = 1e-7;       // relative log-likelihood change
    int max_iters = 500;
    int restarts = 3;
    double floor_factor = 1e-6;  // eigenvalue floor relative to cloud variance scale
    int kmeans_iters = 20;
};

struct EmResult {
    GaussianMixture mixture;
    std::vector<double> loglik_trace;  // mean training log-likelihood per EM iteration
};

/// Fit a K-component mixture by EM with k-means++ seeding; `restarts`
/// independent starts, best training log-likelihood kept. Collapsing
/// covariances are floored, never an error.
EmResult fit_gmm(const ParticleCloud& cloud, int K, const EmConfig& config, Rng& rng);

double log_density(const GaussianMixture& mix, const Vector& x);

/// Batched log densities of every row of pts.
Vector log_density_cloud(const GaussianMixture& mix, const Matrix& pts);

/// Batched gradient of the log density at every row of pts; returns M x d.
Matrix grad_log_density_cloud(const GaussianMixture& mix, const Matrix& pts);

/// Gradient of log_density at x: sum_k r_k(x) * Sigma_k^{-1} (m_k - x) with
/// r_k the posterior responsibilities.
Vector grad_log_density(const GaussianMixture& mix, const Vector& x);

/// Mean log-density of a cloud under the mixture (model selection helper).
double mean_log_density(const GaussianMixture& mix, const ParticleCloud& cloud);

}  // namespace bslwg
