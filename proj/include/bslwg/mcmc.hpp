#pragma once

#include <cstdint>
#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/rng.hpp"
#include "bslwg/sl_core.hpp"
#include "bslwg/vb.hpp"
#include "bslwg/wg_flow.hpp"

namespace bslwg {

struct McmcConfig {
    int iterations = 20000;
    Vector proposal_scale;     // per-parameter; defaulted when empty
    int N = 200;               // simulations per proposal
    SlMethod method = SlMethod::Bsl;
    GammaPrior gamma_prior;    // robust variants only
    int adapt_iterations = 0;  // adaptive scale tuning prefix; 0 disables
    int adapt_block = 50;
    int workers = 1;
};

struct Chain {
    Matrix states;             // iterations x (p [+ d]); theta then gamma
    std::vector<double> loglik;
    std::vector<char> accepted;
    int accept_count = 0;
    Eigen::Index p = 0;        // theta block width
};

/// Pseudo-marginal random-walk Metropolis. Each proposal re-simulates N
/// datasets; the current state keeps its stored estimate (never recomputed
/// on rejection). Robust variants propose (theta, Gamma) jointly. Simulator
/// failure auto-rejects the proposal.
Chain run_mcmc(const McmcConfig& config, const SummaryBatchFn& model,
               const GaussianPrior& prior, const SummaryVector& s_obs,
               const WGTransform* wg, const Vector& init, std::uint64_t seed);

}  // namespace bslwg
