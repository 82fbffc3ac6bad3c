#include "bslwg/mcmc.hpp"

#include <cmath>
#include <optional>

namespace bslwg {

namespace {

struct TargetValue {
    double log_post;  // prior + gamma prior + synthetic log-likelihood
    bool valid;
};

TargetValue evaluate(const McmcConfig& cfg, const SummaryBatchFn& model,
                     const GaussianPrior& prior, const SummaryVector& s_obs_t,
                     const WGTransform* wg, const Vector& theta,
                     const std::optional<Vector>& gamma, Rng& rng) {
    try {
        auto batch = model(theta, cfg.N, rng);
        SyntheticLikelihoodEstimate est =
            wg ? wg_moments(*wg, batch) : sample_moments(batch);
        double lp = prior.log_density(theta);
        if (gamma) lp += gamma_log_prior(*gamma, cfg.gamma_prior);
        if (!std::isfinite(lp)) return {lp, true};  // -inf prior: sure rejection
        double ll = synthetic_log_lik(cfg.method, est, s_obs_t, gamma);
        return {lp + ll, true};
    } catch (const std::exception&) {
        return {0.0, false};
    }
}

}  // namespace

Chain run_mcmc(const McmcConfig& config, const SummaryBatchFn& model,
               const GaussianPrior& prior, const SummaryVector& s_obs,
               const WGTransform* wg, const Vector& init, std::uint64_t seed) {
    require(config.iterations >= 1, "iterations must be >= 1");
    require(init.allFinite(), "initial state outside prior support");
    const auto p = init.size();
    const bool robust = config.method != SlMethod::Bsl;
    const auto d = s_obs.size();
    const auto width = robust ? p + d : p;

    SummaryVector s_obs_t = wg ? apply(*wg, s_obs) : s_obs;

    Vector scale = config.proposal_scale;
    if (scale.size() == 0) scale = Vector::Constant(width, 0.1);
    require(scale.size() == width, "proposal scale length mismatch");
    require((scale.array() >= 0.0).all(), "proposal scale must be nonnegative");

    Chain chain;
    chain.p = p;
    chain.states = Matrix(config.iterations, width);
    chain.loglik.reserve(config.iterations);
    chain.accepted.reserve(config.iterations);

    Rng rng(derive_seed(seed, {0x3c3cu}));

    Vector theta = init;
    std::optional<Vector> gamma;
    if (robust) gamma = Vector::Zero(d);

    TargetValue cur = evaluate(config, model, prior, s_obs_t, wg, theta, gamma, rng);
    require(cur.valid, "simulator failure at initial state");

    double adapt_factor = 1.0;
    int block_accepts = 0;

    for (int t = 0; t < config.iterations; ++t) {
        Vector prop_theta(p);
        for (Eigen::Index i = 0; i < p; ++i)
            prop_theta[i] = theta[i] + adapt_factor * scale[i] * rng.normal();
        std::optional<Vector> prop_gamma;
        if (robust) {
            prop_gamma = Vector(d);
            for (Eigen::Index i = 0; i < d; ++i)
                (*prop_gamma)[i] =
                    (*gamma)[i] + adapt_factor * scale[p + i] * rng.normal();
        }

        TargetValue prop =
            evaluate(config, model, prior, s_obs_t, wg, prop_theta, prop_gamma, rng);
        bool accept = false;
        if (prop.valid && std::isfinite(prop.log_post)) {
            double log_ratio = prop.log_post - cur.log_post;
            accept = log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
        }
        if (accept) {
            theta = prop_theta;
            gamma = prop_gamma;
            cur = prop;  // the retained estimate; never recomputed on rejection
            ++chain.accept_count;
            ++block_accepts;
        }

        chain.states.row(t).head(p) = theta.transpose();
        if (robust) chain.states.row(t).tail(d) = gamma->transpose();
        chain.loglik.push_back(cur.log_post);
        chain.accepted.push_back(accept ? 1 : 0);

        // scale tuning toward 20-30% acceptance, frozen after the prefix
        if (t < config.adapt_iterations && (t + 1) % config.adapt_block == 0) {
            double rate = static_cast<double>(block_accepts) / config.adapt_block;
            adapt_factor *= std::exp(rate - 0.25);
            block_accepts = 0;
        }
    }
    return chain;
}

}  // namespace bslwg
