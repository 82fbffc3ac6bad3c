#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/rng.hpp"
#include "bslwg/sl_core.hpp"
#include "bslwg/wg_flow.hpp"

namespace bslwg {

/// Cholesky Gaussian family q = N(mu, Sigma) with Sigma^{-1} = C C^T,
/// C lower-triangular with positive diagonal. Packed as
/// lambda = (mu, vech(C)), vech column-major, length D = p + p(p+1)/2.
struct VariationalParams {
    Vector mu;
    Matrix cholC;

    Eigen::Index p() const { return mu.size(); }
    Eigen::Index packed_size() const { return p() + p() * (p() + 1) / 2; }

    Vector pack() const;
    static VariationalParams unpack(const Vector& lambda, Eigen::Index p);

    /// theta = mu + C^{-T} z, z ~ N(0, I).
    Vector sample(Rng& rng) const;
    /// (C C^T)^{-1}.
    Matrix covariance() const;
};

double log_q(const VariationalParams& params, const Vector& theta);

/// Score in packed lambda order:
///   d/dmu      = C C^T (theta - mu)
///   d/dvech(C) = vech(diag(1/C_ii) - (theta-mu)(theta-mu)^T C)
Vector grad_log_q(const VariationalParams& params, const Vector& theta);

enum class VbMethod { Bsl, RbslMean };

struct VbConfig {
    int S = 400;             // theta samples per iteration
    int N = 200;             // simulations per theta
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps0 = 0.01;
    double tau = 1000.0;
    int t_window = 50;
    int patience = 50;
    int max_iters = 2000;
    VbMethod method = VbMethod::Bsl;
    double sigma0 = 0.5;     // Gamma-prior scale (rBSL-M)
    int workers = 1;
};

/// Independent Gaussian prior on the working-space parameters.
struct GaussianPrior {
    Vector mean;
    Vector var;

    double log_density(const Vector& theta) const;
};

/// Produces N summary vectors simulated at a working-space theta.
using SummaryBatchFn =
    std::function<std::vector<SummaryVector>(const Vector& theta, int N, Rng& rng)>;

/// h(theta) of the score estimator, assembled from precomputed pieces.
/// For BSL the Gamma terms are omitted.
double h_lambda(VbMethod method, double log_prior_theta, double log_q_theta,
                const SyntheticLikelihoodEstimate& est, const SummaryVector& s_obs,
                const std::optional<Vector>& gamma,
                const std::optional<GammaPosterior>& gamma_post, double sigma0);

struct LbGradientEstimate {
    Vector gradient;   // length D
    double lb;         // mean of h over the S samples
    Matrix score;      // S x D, per-sample grad log q
    Vector h_values;   // length S
};

/// One Monte Carlo estimate of the lower-bound gradient: draw S thetas from
/// q, simulate N datasets each, draw Gamma from its conditional posterior
/// (rBSL-M), and average grad log q o (h - c). A failing simulator draw is
/// resampled up to 5 times before "simulator failure" is raised. The
/// per-sample RNG streams derive from (seed, iteration, sample), so the
/// result is independent of the worker count.
LbGradientEstimate estimate_lb_gradient(const VariationalParams& params,
                                        const VbConfig& config,
                                        const SummaryBatchFn& model,
                                        const GaussianPrior& prior,
                                        const SummaryVector& s_obs,
                                        const WGTransform* wg, const Vector& cv,
                                        std::uint64_t seed, int iteration);

/// Per-coordinate optimal control variates
/// c_i = cov(g_i h, g_i) / var(g_i); zero-variance coordinates give c_i = 0.
Vector optimal_control_variates(const Matrix& score, const Vector& h_values);

struct VbTraceRow {
    int iteration;
    double lb;
    double smoothed_lb;
    double alpha;
    int patience;
    double cv_norm;
    std::uint64_t lambda_hash;
};

struct VbState {
    VariationalParams lambda;
    Vector gbar;
    Vector vbar;
    std::vector<double> lb_history;
    Vector control_variates;
    int iteration = 0;
    int patience = 0;
};

struct VbResult {
    VbState state;
    std::vector<VbTraceRow> trace;
};

/// Adaptive-moment optimizer with moving-average stopping. Control variates
/// are estimated from each iteration's samples and applied at the next one.
VbResult optimize(const VbConfig& config, const SummaryBatchFn& model,
                  const GaussianPrior& prior, const SummaryVector& s_obs,
                  const WGTransform* wg, std::uint64_t seed,
                  const std::optional<VariationalParams>& init = std::nullopt);

std::uint64_t fnv1a_hash(const void* data, std::size_t bytes);

}  // namespace bslwg
