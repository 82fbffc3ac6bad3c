#include <algorithm>
#include <cmath>

#include "bslwg/mcmc.hpp"
#include "doctest.h"

using namespace bslwg;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

// Same analytic model as the VB tests: synthetic likelihood collapses to
// log phi(s_obs; theta, 1); with the N(0,1) prior the posterior is
// N(s_obs/2, 1/2).
SummaryBatchFn analytic_model(int* calls = nullptr) {
    return [calls](const Vector& theta, int, Rng&) {
        if (calls) ++*calls;
        std::vector<SummaryVector> out;
        Vector lo(1), hi(1);
        lo[0] = theta[0] - 1.0;
        hi[0] = theta[0] + 1.0;
        out.push_back(lo);
        out.push_back(hi);
        return out;
    };
}

GaussianPrior unit_prior() {
    GaussianPrior p;
    p.mean = vec({0.0});
    p.var = vec({1.0});
    return p;
}

}  // namespace

TEST_CASE("zero proposal scale keeps the chain constant with full acceptance") {
    McmcConfig cfg;
    cfg.iterations = 200;
    cfg.N = 2;
    cfg.proposal_scale = vec({0.0});
    Chain chain = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                           vec({0.3}), 21);
    CHECK(chain.accept_count == cfg.iterations);
    CHECK((chain.states.col(0).array() == 0.3).all());
}

TEST_CASE("chain recovers the conjugate posterior mean") {
    McmcConfig cfg;
    cfg.iterations = 50000;
    cfg.N = 2;
    cfg.proposal_scale = vec({1.0});
    Chain chain = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                           vec({0.0}), 22);
    auto burn = chain.states.rows() / 4;
    double mean = chain.states.col(0).tail(chain.states.rows() - burn).mean();
    CHECK(std::abs(mean - 0.5) < 0.03);
    double rate = static_cast<double>(chain.accept_count) / cfg.iterations;
    CHECK(rate > 0.1);
    CHECK(rate < 0.9);
}

TEST_CASE("thinned marginal matches the known Gaussian posterior (KS distance)") {
    McmcConfig cfg;
    cfg.iterations = 50000;
    cfg.N = 2;
    cfg.proposal_scale = vec({1.2});
    Chain chain = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                           vec({0.5}), 23);
    std::vector<double> draws;
    for (Eigen::Index t = chain.states.rows() / 4; t < chain.states.rows(); t += 10)
        draws.push_back(chain.states(t, 0));
    std::sort(draws.begin(), draws.end());
    const double sd = std::sqrt(0.5);
    double ks = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        double cdf = 0.5 * std::erfc(-(draws[i] - 0.5) / (sd * std::sqrt(2.0)));
        double lo = static_cast<double>(i) / draws.size();
        double hi = static_cast<double>(i + 1) / draws.size();
        ks = std::max({ks, std::abs(cdf - lo), std::abs(cdf - hi)});
    }
    CHECK(ks < 0.05);
}

TEST_CASE("pseudo-marginal bookkeeping: one simulation batch per proposal") {
    int calls = 0;
    McmcConfig cfg;
    cfg.iterations = 300;
    cfg.N = 2;
    cfg.proposal_scale = vec({5.0});  // force many rejections
    Chain chain = run_mcmc(cfg, analytic_model(&calls), unit_prior(), vec({1.0}),
                           nullptr, vec({0.5}), 24);
    // initial state + one batch per proposal; rejections never recompute
    CHECK(calls == cfg.iterations + 1);
    CHECK(chain.accept_count < cfg.iterations);
}

TEST_CASE("robust variant carries a Gamma block and joint proposals") {
    McmcConfig cfg;
    cfg.iterations = 2000;
    cfg.N = 2;
    cfg.method = SlMethod::RbslMean;
    cfg.gamma_prior = {GammaPriorKind::Laplace, 0.5};
    cfg.proposal_scale = vec({0.8, 0.8});  // theta, gamma (d = 1)
    Chain chain = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                           vec({0.0}), 25);
    CHECK(chain.states.cols() == 2);
    CHECK(chain.p == 1);
    CHECK(chain.states.allFinite());
    CHECK(chain.accept_count > 0);
}

TEST_CASE("adaptive prefix pushes acceptance toward the 20-30% band") {
    McmcConfig cfg;
    cfg.iterations = 8000;
    cfg.N = 2;
    cfg.proposal_scale = vec({20.0});  // far too wide on purpose
    cfg.adapt_iterations = 4000;
    Chain chain = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                           vec({0.5}), 26);
    int post = 0;
    for (Eigen::Index t = cfg.adapt_iterations; t < cfg.iterations; ++t)
        post += chain.accepted[static_cast<std::size_t>(t)];
    double rate = static_cast<double>(post) / (cfg.iterations - cfg.adapt_iterations);
    CHECK(rate > 0.10);
    CHECK(rate < 0.45);
}

TEST_CASE("fixed seed reproduces the chain exactly") {
    McmcConfig cfg;
    cfg.iterations = 500;
    cfg.N = 2;
    cfg.proposal_scale = vec({1.0});
    Chain a = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                       vec({0.0}), 27);
    Chain b = run_mcmc(cfg, analytic_model(), unit_prior(), vec({1.0}), nullptr,
                       vec({0.0}), 27);
    CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.accept_count == b.accept_count);
}
