#include <sstream>
#include "bslwg/vb.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "bslwg/parallel.hpp"

namespace bslwg {

std::uint64_t fnv1a_hash(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

Vector VariationalParams::pack() const {
    const auto n = p();
    Vector out(packed_size());
    out.head(n) = mu;
    Eigen::Index idx = n;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i) out[idx++] = cholC(i, j);
    return out;
}

VariationalParams VariationalParams::unpack(const Vector& lambda, Eigen::Index p) {
    require(lambda.size() == p + p * (p + 1) / 2, "bad packed length");
    VariationalParams out;
    out.mu = lambda.head(p);
    out.cholC = Matrix::Zero(p, p);
    Eigen::Index idx = p;
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = j; i < p; ++i) out.cholC(i, j) = lambda[idx++];
    return out;
}

Vector VariationalParams::sample(Rng& rng) const {
    Vector z(p());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mu + cholC.transpose().triangularView<Eigen::Upper>().solve(z);
}

Matrix VariationalParams::covariance() const {
    Matrix prec = cholC * cholC.transpose();
    return prec.inverse();
}

double log_q(const VariationalParams& params, const Vector& theta) {
    require(theta.size() == params.p(), "dimension mismatch");
    Vector w = params.cholC.transpose() * (theta - params.mu);
    return -0.5 * static_cast<double>(params.p()) * kLog2Pi +
           params.cholC.diagonal().array().log().sum() - 0.5 * w.squaredNorm();
}

Vector grad_log_q(const VariationalParams& params, const Vector& theta) {
    const auto p = params.p();
    Vector diff = theta - params.mu;
    Vector out(params.packed_size());
    out.head(p) = params.cholC * (params.cholC.transpose() * diff);
    Matrix m = -diff * (diff.transpose() * params.cholC);
    m.diagonal() += params.cholC.diagonal().cwiseInverse();
    Eigen::Index idx = p;
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = j; i < p; ++i) out[idx++] = m(i, j);
    return out;
}

double GaussianPrior::log_density(const Vector& theta) const {
    require(theta.size() == mean.size(), "dimension mismatch");
    double out = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        double d = theta[i] - mean[i];
        out += -0.5 * kLog2Pi - 0.5 * std::log(var[i]) - 0.5 * d * d / var[i];
    }
    return out;
}

double h_lambda(VbMethod method, double log_prior_theta, double log_q_theta,
                const SyntheticLikelihoodEstimate& est, const SummaryVector& s_obs,
                const std::optional<Vector>& gamma,
                const std::optional<GammaPosterior>& gamma_post, double sigma0) {
    if (method == VbMethod::Bsl)
        return log_prior_theta + synthetic_log_lik(SlMethod::Bsl, est, s_obs) -
               log_q_theta;
    require(gamma.has_value() && gamma_post.has_value(),
            "gamma and its posterior required for rBSL-M");
    double lp_gamma = gamma_log_prior(*gamma, {GammaPriorKind::Gaussian, sigma0});
    double ll = synthetic_log_lik(SlMethod::RbslMean, est, s_obs, gamma);
    double lq_gamma = gaussian_log_density(*gamma, gamma_post->mean, gamma_post->cov);
    return log_prior_theta + lp_gamma + ll - log_q_theta - lq_gamma;
}

LbGradientEstimate estimate_lb_gradient(const VariationalParams& params,
                                        const VbConfig& config,
                                        const SummaryBatchFn& model,
                                        const GaussianPrior& prior,
                                        const SummaryVector& s_obs,
                                        const WGTransform* wg, const Vector& cv,
                                        std::uint64_t seed, int iteration) {
    require(config.S >= 2, "S must be >= 2");
    const auto D = params.packed_size();
    SummaryVector s_obs_t = wg ? apply(*wg, s_obs) : s_obs;

    LbGradientEstimate out;
    out.score = Matrix(config.S, D);
    out.h_values = Vector(config.S);

    parallel_for(static_cast<std::size_t>(config.S), config.workers, [&](std::size_t i) {
        Rng rng(derive_seed(seed, {0x5bu, static_cast<std::uint64_t>(iteration), i}));
        Vector theta;
        bool ok = false;
        std::string last_error;
        // a theta is retried when the simulator rejects it, and also when its
        // summary batch yields a degenerate moment estimate or the objective
        // cannot be evaluated there
        for (int attempt = 0; attempt < 5 && !ok; ++attempt) {
            theta = params.sample(rng);
            try {
                std::vector<SummaryVector> batch = model(theta, config.N, rng);
                SyntheticLikelihoodEstimate est =
                    wg ? wg_moments(*wg, batch) : sample_moments(batch);
                std::optional<Vector> gamma;
                std::optional<GammaPosterior> gpost;
                if (config.method == VbMethod::RbslMean) {
                    gpost = gamma_posterior(est, s_obs_t, config.sigma0);
                    Eigen::LLT<Matrix> llt(gpost->cov);
                    require(llt.info() == Eigen::Success,
                            "degenerate adjustment posterior");
                    Matrix chol = llt.matrixL();
                    Vector z(gpost->mean.size());
                    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
                    gamma = gpost->mean + chol * z;
                }
                double lq = log_q(params, theta);
                double h = h_lambda(config.method, prior.log_density(theta), lq,
                                    est, s_obs_t, gamma, gpost, config.sigma0);
                require(std::isfinite(h), "non-finite objective");
                out.h_values[i] = h;
                out.score.row(i) = grad_log_q(params, theta).transpose();
                ok = true;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        if (!ok) {
            std::ostringstream os;
            os << "simulator failure (" << last_error << ") at theta ="
               << theta.transpose().format(Eigen::IOFormat(6, 0, " ", " "));
            throw std::runtime_error(os.str());
        }
    });

    out.gradient = Vector::Zero(D);
    for (int i = 0; i < config.S; ++i)
        out.gradient += out.score.row(i).transpose().cwiseProduct(
            Vector::Constant(D, out.h_values[i]) - cv);
    out.gradient /= static_cast<double>(config.S);
    out.lb = out.h_values.mean();
    return out;
}

Vector optimal_control_variates(const Matrix& score, const Vector& h_values) {
    const auto S = score.rows();
    require(S >= 2 && h_values.size() == S, "need at least two samples");
    const auto D = score.cols();
    Vector cv(D);
    for (Eigen::Index j = 0; j < D; ++j) {
        double gm = score.col(j).mean();
        Vector gh = score.col(j).cwiseProduct(h_values);
        double ghm = gh.mean();
        double cov = 0.0, var = 0.0;
        for (Eigen::Index i = 0; i < S; ++i) {
            double gd = score(i, j) - gm;
            cov += (gh[i] - ghm) * gd;
            var += gd * gd;
        }
        cv[j] = var > 0.0 ? cov / var : 0.0;
    }
    return cv;
}

VbResult optimize(const VbConfig& config, const SummaryBatchFn& model,
                  const GaussianPrior& prior, const SummaryVector& s_obs,
                  const WGTransform* wg, std::uint64_t seed,
                  const std::optional<VariationalParams>& init) {
    require(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 &&
                config.beta2 < 1.0,
            "adaptive weights must lie in (0,1)");
    require(config.eps0 > 0.0 && config.tau > 0.0 && config.t_window >= 1,
            "invalid optimizer settings");

    VbState st;
    if (init) {
        st.lambda = *init;
    } else {
        // q starts at the prior mean with a quarter of the prior variance
        st.lambda.mu = prior.mean;
        st.lambda.cholC =
            Matrix((2.0 * prior.var.array().rsqrt()).matrix().asDiagonal());
    }
    const auto D = st.lambda.packed_size();
    st.control_variates = Vector::Zero(D);

    // seed the accumulators with one estimate at lambda^(0)
    LbGradientEstimate g0 = estimate_lb_gradient(st.lambda, config, model, prior,
                                                 s_obs, wg, st.control_variates,
                                                 seed, -1);
    st.gbar = g0.gradient;
    st.vbar = g0.gradient.array().square();
    st.control_variates = optimal_control_variates(g0.score, g0.h_values);

    VbResult result;
    double eps0 = config.eps0;
    bool halved = false;
    double best_window_mean = -std::numeric_limits<double>::infinity();

    for (int t = 0; t < config.max_iters; ++t) {
        LbGradientEstimate gt =
            estimate_lb_gradient(st.lambda, config, model, prior, s_obs, wg,
                                 st.control_variates, seed, t);
        if (!gt.gradient.allFinite() || !std::isfinite(gt.lb)) {
            require(!halved, "VB diverged");
            halved = true;
            eps0 *= 0.5;
            continue;
        }
        st.control_variates = optimal_control_variates(gt.score, gt.h_values);

        st.gbar = config.beta1 * st.gbar + (1.0 - config.beta1) * gt.gradient;
        st.vbar = config.beta2 * st.vbar +
                  (1.0 - config.beta2) * gt.gradient.array().square().matrix();

        double alpha = t == 0 ? eps0 : std::min(eps0, eps0 * config.tau / t);
        Vector lambda = st.lambda.pack();
        lambda += alpha * (st.gbar.array() / st.vbar.array().sqrt().max(1e-300)).matrix();
        st.lambda = VariationalParams::unpack(lambda, st.lambda.p());
        // keep the factor diagonal positive
        for (Eigen::Index i = 0; i < st.lambda.p(); ++i)
            if (st.lambda.cholC(i, i) < 1e-6) st.lambda.cholC(i, i) = 1e-6;

        st.lb_history.push_back(gt.lb);
        double smoothed = gt.lb;
        bool window_evaluated = false;
        if (static_cast<int>(st.lb_history.size()) >= config.t_window) {
            window_evaluated = true;
            double wmean = 0.0;
            for (int k = 0; k < config.t_window; ++k)
                wmean += st.lb_history[st.lb_history.size() - 1 - k];
            wmean /= config.t_window;
            smoothed = wmean;
            if (wmean >= best_window_mean) {
                best_window_mean = wmean;
                st.patience = 0;
            } else {
                ++st.patience;
            }
        }
        st.iteration = t;

        Vector packed = st.lambda.pack();
        result.trace.push_back({t, gt.lb, smoothed, alpha, st.patience,
                                st.control_variates.norm(),
                                fnv1a_hash(packed.data(),
                                           sizeof(double) * packed.size())});
        if (window_evaluated && st.patience >= config.patience) break;
    }

    result.state = std::move(st);
    return result;
}

}  // namespace bslwg
