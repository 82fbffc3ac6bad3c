#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/gmm.hpp"
#include "bslwg/sl_core.hpp"

namespace bslwg {

struct FlowStep {
    GaussianMixture mixture;
    double epsilon = 0.0;
};

/// The composed Gaussianization map: an affine standardizer followed by the
/// ordered flow steps. Replaying the steps on the training cloud reproduces
/// the final training particles bit-for-bit.
struct WGTransform {
    Eigen::Index d = 0;
    Vector shift;   // per-coordinate mean of the training cloud
    Vector scale;   // per-coordinate standard deviation
    std::vector<FlowStep> steps;

    // training metadata
    std::uint64_t seed = 0;
    int iterations = 0;
    double final_lb = 0.0;
    std::vector<double> lb_trace;

    /// Identity transform in d dimensions (no steps, unit standardizer).
    static WGTransform identity(Eigen::Index d);
};

struct WGConfig {
    double epsilon = 0.05;
    int max_iters = 500;
    int lb_window = 10;       // smoothing window for the stopping rule
    int patience = 20;
    int k_refresh = 25;       // re-select K every this many iterations
    std::vector<int> k_candidates = {1, 2, 3, 5, 8};
    EmConfig em;
    bool halve_on_divergence = true;
    int max_halvings = 10;
};

/// v(x) = -x - grad log mu(x); zero everywhere when mu is the standard normal.
Vector velocity(const GaussianMixture& mix, const Vector& x);

/// One minimizing-movement step: x <- x + epsilon * v(x). Throws
/// "flow diverged" if any updated particle is non-finite.
ParticleCloud flow_step(const ParticleCloud& cloud, const GaussianMixture& mix,
                        double epsilon);

/// Validation lower bound: mean over particles of -0.5 s^T s - log mu(s).
/// Equals (d/2) log 2pi when mu is the standard normal.
double wg_lower_bound(const GaussianMixture& mix, const ParticleCloud& validation);

/// Train the transform: standardize, then iterate fit -> step -> compose,
/// stopping when the smoothed validation lower bound stops improving.
WGTransform train_wg(const ParticleCloud& train, const ParticleCloud& validation,
                     const WGConfig& config, std::uint64_t seed);

/// Apply the transform to one summary vector. Deterministic; throws
/// "transform overflow" on non-finite output.
SummaryVector apply(const WGTransform& transform, const SummaryVector& s);

ParticleCloud apply(const WGTransform& transform, const ParticleCloud& cloud);

/// Moments of the transformed summaries (feeds the WG synthetic likelihood).
SyntheticLikelihoodEstimate wg_moments(const WGTransform& transform,
                                       const std::vector<SummaryVector>& summaries);

/// Versioned text serialization; save -> load -> apply is bit-identical.
void save_wg(const WGTransform& transform, std::ostream& os);
void save_wg(const WGTransform& transform, const std::string& path);
WGTransform load_wg(std::istream& is);
WGTransform load_wg(const std::string& path);

}  // namespace bslwg
