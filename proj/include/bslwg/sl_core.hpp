#pragma once

#include <optional>
#include <vector>

#include "bslwg/common.hpp"

namespace bslwg {

/// Sample moments of one batch of simulated summaries, with the Cholesky
/// factor and log-determinant of the (jittered) covariance cached for
/// repeated density evaluations.
struct SyntheticLikelihoodEstimate {
    Vector mean;
    Matrix cov;     // raw sample covariance, divisor N
    Matrix chol;    // lower-triangular factor of the jittered covariance
    double logdet;  // log det of the jittered covariance
};

enum class SlMethod { Bsl, RbslMean, RbslVariance };

enum class GammaPriorKind { Gaussian, Laplace, Exponential };

struct GammaPrior {
    GammaPriorKind kind = GammaPriorKind::Gaussian;
    double param = 0.5;  // sigma0 (gaussian), scale (laplace) or rate (exponential)
};

struct GammaPosterior {
    Vector mean;
    Matrix cov;
};

/// Sample mean and covariance (divisor N) of N summary vectors, plus the
/// Cholesky factor of the covariance after the jitter ladder: eps*trace/d*I
/// with eps = 1e-10, 1e-9, ..., 1e-4. Throws "no summaries" on empty input
/// and "degenerate covariance" if no jitter level factorizes.
SyntheticLikelihoodEstimate sample_moments(const std::vector<SummaryVector>& summaries);

/// mu + diag(cov)^{1/2} o gamma.
Vector adjusted_mean(const SyntheticLikelihoodEstimate& est, const Vector& gamma);

/// cov + diag(diag(cov) o gamma^2).
Matrix adjusted_variance(const SyntheticLikelihoodEstimate& est, const Vector& gamma);

/// Multivariate normal log-density from a precomputed lower-triangular factor.
double gaussian_log_density(const Vector& x, const Vector& mean,
                            const Matrix& chol, double logdet);

/// Convenience: factorizes cov (no jitter) and evaluates.
double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& cov);

/// Conditional posterior of the mean-adjustment parameters under the
/// N(0, sigma0^2 I) prior; Gaussian with
///   cov  = (sigma0^-2 I + D^{1/2} S^-1 D^{1/2})^-1,  D = diag(diag(S)),
///   mean = cov * D^{1/2} S^-1 (s_obs - mu).
GammaPosterior gamma_posterior(const SyntheticLikelihoodEstimate& est,
                               const SummaryVector& s_obs, double sigma0);

/// Synthetic log-likelihood of s_obs under the chosen method; gamma is
/// required for the robust variants.
double synthetic_log_lik(SlMethod method, const SyntheticLikelihoodEstimate& est,
                         const SummaryVector& s_obs,
                         const std::optional<Vector>& gamma = std::nullopt);

/// Sum of independent per-component log prior densities. An exponential
/// prior with a negative component returns -infinity.
double gamma_log_prior(const Vector& gamma, const GammaPrior& prior);

}  // namespace bslwg
