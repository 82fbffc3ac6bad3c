#include "bslwg/sl_core.hpp"

#include <cmath>
#include <limits>

namespace bslwg {

namespace {

// Lower Cholesky with the jitter ladder. Returns false if every level fails.
bool chol_with_jitter(const Matrix& cov, Matrix& chol_out, double& logdet_out) {
    const auto d = cov.rows();
    double scale = cov.trace() / static_cast<double>(d);
    if (scale <= 0.0) scale = 1.0;
    for (double eps = 1e-10; eps <= 1.0001e-4; eps *= 10.0) {
        Matrix jittered = cov + (eps * scale) * Matrix::Identity(d, d);
        Eigen::LLT<Matrix> llt(jittered);
        if (llt.info() == Eigen::Success) {
            chol_out = llt.matrixL();
            logdet_out = 2.0 * chol_out.diagonal().array().log().sum();
            return true;
        }
    }
    return false;
}

}  // namespace

SyntheticLikelihoodEstimate sample_moments(const std::vector<SummaryVector>& summaries) {
    require(!summaries.empty(), "no summaries");
    const auto n = static_cast<Eigen::Index>(summaries.size());
    const auto d = summaries[0].size();
    Vector mean = Vector::Zero(d);
    for (const auto& s : summaries) {
        require(s.size() == d, "summary dimension mismatch");
        mean += s;
    }
    mean /= static_cast<double>(n);
    Matrix cov = Matrix::Zero(d, d);
    for (const auto& s : summaries) {
        Vector c = s - mean;
        cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(n);

    SyntheticLikelihoodEstimate est;
    est.mean = std::move(mean);
    est.cov = std::move(cov);
    require(chol_with_jitter(est.cov, est.chol, est.logdet), "degenerate covariance");
    return est;
}

Vector adjusted_mean(const SyntheticLikelihoodEstimate& est, const Vector& gamma) {
    require(gamma.size() == est.mean.size(), "gamma dimension mismatch");
    require((est.cov.diagonal().array() >= 0.0).all(), "invalid covariance");
    return est.mean.array() + est.cov.diagonal().array().sqrt() * gamma.array();
}

Matrix adjusted_variance(const SyntheticLikelihoodEstimate& est, const Vector& gamma) {
    require(gamma.size() == est.mean.size(), "gamma dimension mismatch");
    require(gamma.allFinite(), "gamma not finite");
    require((est.cov.diagonal().array() >= 0.0).all(), "invalid covariance");
    Matrix out = est.cov;
    out.diagonal().array() += est.cov.diagonal().array() * gamma.array().square();
    return out;
}

double gaussian_log_density(const Vector& x, const Vector& mean,
                            const Matrix& chol, double logdet) {
    require(x.size() == mean.size() && x.size() == chol.rows(), "dimension mismatch");
    Vector z = chol.triangularView<Eigen::Lower>().solve(x - mean);
    return -0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * logdet -
           0.5 * z.squaredNorm();
}

double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    require(llt.info() == Eigen::Success, "degenerate covariance");
    Matrix chol = llt.matrixL();
    double logdet = 2.0 * chol.diagonal().array().log().sum();
    return gaussian_log_density(x, mean, chol, logdet);
}

GammaPosterior gamma_posterior(const SyntheticLikelihoodEstimate& est,
                               const SummaryVector& s_obs, double sigma0) {
    require(sigma0 > 0.0, "sigma0 must be positive");
    require(s_obs.size() == est.mean.size(), "dimension mismatch");
    const auto d = est.mean.size();
    Eigen::LLT<Matrix> llt(est.cov);
    require(llt.info() == Eigen::Success, "degenerate covariance");
    Vector sd = est.cov.diagonal().array().sqrt();
    Matrix sigma_inv_sd = llt.solve(Matrix(sd.asDiagonal()));  // S^-1 D^{1/2}
    Matrix precision = Matrix::Identity(d, d) / (sigma0 * sigma0) +
                       sd.asDiagonal() * sigma_inv_sd;
    GammaPosterior post;
    post.cov = precision.inverse();
    // symmetrize against round-off
    post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
    post.mean = post.cov * (sd.asDiagonal() * llt.solve(s_obs - est.mean));
    return post;
}

double synthetic_log_lik(SlMethod method, const SyntheticLikelihoodEstimate& est,
                         const SummaryVector& s_obs,
                         const std::optional<Vector>& gamma) {
    switch (method) {
        case SlMethod::Bsl:
            return gaussian_log_density(s_obs, est.mean, est.chol, est.logdet);
        case SlMethod::RbslMean: {
            require(gamma.has_value(), "gamma required for rBSL-M");
            Vector mu = adjusted_mean(est, *gamma);
            return gaussian_log_density(s_obs, mu, est.chol, est.logdet);
        }
        case SlMethod::RbslVariance: {
            require(gamma.has_value(), "gamma required for rBSL-V");
            // factorize through the same jitter ladder as sample_moments so a
            // zero adjustment reproduces the unadjusted value exactly
            Matrix cov = adjusted_variance(est, *gamma);
            Matrix chol;
            double logdet;
            require(chol_with_jitter(cov, chol, logdet), "degenerate covariance");
            return gaussian_log_density(s_obs, est.mean, chol, logdet);
        }
    }
    throw std::logic_error("unknown method");
}

double gamma_log_prior(const Vector& gamma, const GammaPrior& prior) {
    double out = 0.0;
    switch (prior.kind) {
        case GammaPriorKind::Gaussian: {
            double s = prior.param;
            for (Eigen::Index i = 0; i < gamma.size(); ++i)
                out += -0.5 * kLog2Pi - std::log(s) - 0.5 * gamma[i] * gamma[i] / (s * s);
            break;
        }
        case GammaPriorKind::Laplace: {
            double b = prior.param;
            for (Eigen::Index i = 0; i < gamma.size(); ++i)
                out += -std::log(2.0 * b) - std::abs(gamma[i]) / b;
            break;
        }
        case GammaPriorKind::Exponential: {
            double rate = prior.param;
            for (Eigen::Index i = 0; i < gamma.size(); ++i) {
                if (gamma[i] < 0.0) return -std::numeric_limits<double>::infinity();
                out += std::log(rate) - rate * gamma[i];
            }
            break;
        }
    }
    return out;
}

}  // namespace bslwg
