#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bslwg/common.hpp"
#include "bslwg/rng.hpp"

namespace bslwg {

/// Inverse standard normal CDF (Acklam's rational approximation plus one
/// Halley refinement; ~1e-15 absolute error).
double normal_quantile(double p);

/// Uniform simulate-and-summarize interface. Parameters are handled in an
/// unconstrained working space; `constrain` maps working -> natural.
class Simulator {
public:
    virtual ~Simulator() = default;
    virtual std::string name() const = 0;
    virtual int param_dim() const = 0;
    virtual int summary_dim() const = 0;
    /// Natural-parameter dataset simulation.
    virtual std::vector<double> simulate(const Vector& theta_natural, int n,
                                         Rng& rng) const = 0;
    virtual SummaryVector summarize(const std::vector<double>& dataset) const = 0;
    virtual Vector constrain(const Vector& working) const = 0;
    virtual Vector unconstrain(const Vector& natural) const = 0;

    /// simulate + summarize at a working-space parameter.
    SummaryVector simulate_summary(const Vector& working, int n, Rng& rng) const {
        return summarize(simulate(constrain(working), n, rng));
    }
};

std::unique_ptr<Simulator> make_simulator(const std::string& name);
std::vector<std::string> simulator_names();

// ---- toy location model with heavily skewed errors -------------------------

/// y_i = theta + 2 (v_i - 100)/100, v_i ~ Gamma(shape 1, rate 0.01);
/// errors have mean 0, variance 4.
std::vector<double> toy_simulate(double theta, int n, Rng& rng);
/// (sample mean, sample variance with divisor n-1).
SummaryVector toy_summarize(const std::vector<double>& dataset);

// ---- alpha-stable ----------------------------------------------------------

/// One standard draw from S(alpha, beta) in the 1-parameterization
/// (Chambers-Mallows-Stuck). Caller scales by gamma and shifts by delta.
double stable_standard_draw(double alpha, double beta, Rng& rng);

/// theta = (alpha, beta, gamma, delta); alpha in (1.1, 2), beta in (-1, 1),
/// gamma > 0. `boundary_ok` admits alpha = 2 (test-only Gaussian reduction).
std::vector<double> alpha_stable_simulate(const Vector& theta, int n, Rng& rng,
                                          bool boundary_ok = false);

/// McCulloch quantile statistics (type-7 quantiles):
/// v_a = (q95-q05)/(q75-q25), v_b = (q95+q05-2 q50)/(q95-q05),
/// v_g = q75-q25, v_d = q50.
SummaryVector alpha_stable_summarize(const std::vector<double>& dataset);

Vector alpha_stable_unconstrain(const Vector& natural);
Vector alpha_stable_constrain(const Vector& working);

// ---- g-and-k ---------------------------------------------------------------

/// Q(p) = A + B [1 + 0.8 (1-e^{-gz})/(1+e^{-gz})] (1+z^2)^k z, z = Phi^{-1}(p).
double gnk_quantile(double p, const Vector& theta);
std::vector<double> gnk_simulate(const Vector& theta, int n, Rng& rng);
/// Octile statistics s_A = O4, s_B = O6-O2, s_g = (O7-O5+O3-O1)/s_B,
/// s_k = (O6+O2-2 O4)/s_B.
SummaryVector gnk_summarize(const std::vector<double>& dataset);

// ---- Fowler's toads --------------------------------------------------------

struct ToadsObservation {
    Matrix positions;  // n_d x n_t, meters
};

/// Random-return model: overnight displacement ~ S(alpha, gamma) symmetric
/// stable; with probability p0 the toad returns to a uniformly chosen
/// previous refuge site.
ToadsObservation toads_simulate(const Vector& theta, int n_d, int n_t, Rng& rng);

/// 12 statistics: for each lag in {1,2,4,8} the count of displacements below
/// 10 m, plus log(median-min) and log(max-median) of the non-return subset.
/// Empty subsets yield the documented sentinel value 0.
SummaryVector toads_summarize(const ToadsObservation& obs);

inline constexpr double kToadsReturnThreshold = 10.0;  // meters
inline constexpr double kToadsSentinel = 0.0;

}  // namespace bslwg
