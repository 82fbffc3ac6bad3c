#include <algorithm>
#include <cmath>
#include <numeric>

#include "bslwg/rng.hpp"
#include "bslwg/simulators.hpp"
#include "doctest.h"

using namespace bslwg;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

double sample_mean(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_var(const std::vector<double>& xs) {
    double m = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / (static_cast<double>(xs.size()) - 1.0);
}

}  // namespace

TEST_CASE("inverse normal CDF reference values") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.9599639845400545).epsilon(1e-12));
    CHECK(normal_quantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-12));
    CHECK(normal_quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-12));
}

// ---- toy -------------------------------------------------------------------

TEST_CASE("toy error distribution has mean 0 and variance 4") {
    Rng rng(derive_seed(31, {1}));
    std::vector<double> data = toy_simulate(0.0, 1000000, rng);
    CHECK(std::abs(sample_mean(data)) < 0.01);
    CHECK(std::abs(sample_var(data) - 4.0) < 0.05);
}

TEST_CASE("toy is a location family under a shared seed") {
    Rng a(derive_seed(31, {2}));
    Rng b(derive_seed(31, {2}));
    auto base = toy_simulate(0.0, 50, a);
    auto shifted = toy_simulate(3.0, 50, b);
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(shifted[i] == doctest::Approx(base[i] + 3.0).epsilon(1e-14));
}

TEST_CASE("toy summaries of a constant dataset") {
    SummaryVector s = toy_summarize({5.0, 5.0, 5.0, 5.0});
    CHECK(s[0] == 5.0);
    CHECK(s[1] == 0.0);
}

// ---- alpha-stable ----------------------------------------------------------

TEST_CASE("alpha = 2 boundary reduces to N(delta, 2 gamma^2)") {
    Rng rng(derive_seed(31, {3}));
    auto data = alpha_stable_simulate(vec({2.0, 0.0, 1.0, 0.5}), 1000000, rng, true);
    // mean SE = sqrt(2/n), variance SE ~ sqrt(2/n)*var
    CHECK(std::abs(sample_mean(data) - 0.5) < 3.0 * std::sqrt(2.0 / 1e6));
    CHECK(std::abs(sample_var(data) - 2.0) < 0.02);
}

TEST_CASE("symmetric stable has median near zero") {
    Rng rng(derive_seed(31, {4}));
    auto data = alpha_stable_simulate(vec({1.5, 0.0, 1.0, 0.0}), 100000, rng);
    std::sort(data.begin(), data.end());
    CHECK(std::abs(data[data.size() / 2]) < 0.02);
}

TEST_CASE("stable draws are reproducible under a fixed seed") {
    Rng a(derive_seed(31, {5}));
    Rng b(derive_seed(31, {5}));
    auto x = alpha_stable_simulate(vec({1.7, 0.3, 2.0, -1.0}), 5, a);
    auto y = alpha_stable_simulate(vec({1.7, 0.3, 2.0, -1.0}), 5, b);
    for (int i = 0; i < 5; ++i) CHECK(x[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)]);
}

TEST_CASE("stable parameters outside the constraints are rejected") {
    Rng rng(derive_seed(31, {6}));
    CHECK_THROWS(alpha_stable_simulate(vec({1.0, 0.0, 1.0, 0.0}), 10, rng));
    CHECK_THROWS(alpha_stable_simulate(vec({1.5, 1.5, 1.0, 0.0}), 10, rng));
    CHECK_THROWS(alpha_stable_simulate(vec({1.5, 0.0, -1.0, 0.0}), 10, rng));
}

TEST_CASE("quantile summaries: symmetry and normal IQR") {
    Rng rng(derive_seed(31, {7}));
    std::vector<double> normal(1000000);
    for (auto& x : normal) x = rng.normal();
    SummaryVector s = alpha_stable_summarize(normal);
    CHECK(std::abs(s[2] - 1.3489795) < 0.01);  // q75 - q25 of N(0,1)
    CHECK(std::abs(s[1]) < 0.01);              // near-symmetric
    CHECK(std::abs(s[3]) < 0.01);

    // exact symmetry on a mirror-augmented sample
    std::vector<double> mirror;
    for (int i = 0; i < 5000; ++i) {
        double x = rng.exponential(0.7);
        mirror.push_back(x);
        mirror.push_back(-x);
    }
    SummaryVector m = alpha_stable_summarize(mirror);
    CHECK(std::abs(m[1]) < 1e-12);
    CHECK(std::abs(m[3]) < 1e-12);
}

TEST_CASE("quantile summaries: affine equivariance") {
    Rng rng(derive_seed(31, {8}));
    std::vector<double> x(5000);
    for (auto& v : x) v = rng.normal() + 0.3 * rng.exponential(1.0);
    const double a = 2.5, b = -1.0;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;
    SummaryVector sx = alpha_stable_summarize(x);
    SummaryVector sy = alpha_stable_summarize(y);
    CHECK(sy[0] == doctest::Approx(sx[0]).epsilon(1e-12));
    CHECK(sy[1] == doctest::Approx(sx[1]).epsilon(1e-9));
    CHECK(sy[2] == doctest::Approx(a * sx[2]).epsilon(1e-12));
    CHECK(sy[3] == doctest::Approx(a * sx[3] + b).epsilon(1e-9));
}

TEST_CASE("degenerate sample is rejected by the quantile summaries") {
    std::vector<double> flat(100, 1.0);
    CHECK_THROWS_WITH(alpha_stable_summarize(flat), doctest::Contains("degenerate"));
}

TEST_CASE("stable reparameterization") {
    CHECK(alpha_stable_unconstrain(vec({1.55, 0.0, 1.0, 0.7}))[0] ==
          doctest::Approx(0.0).epsilon(1e-12));
    Vector w = alpha_stable_unconstrain(vec({1.55, 0.0, 1.0, 0.7}));
    CHECK(w[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(0.7).epsilon(1e-12));

    Vector theta = vec({1.8, 0.5, 1.0, 0.0});
    Vector back = alpha_stable_constrain(alpha_stable_unconstrain(theta));
    CHECK((back - theta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("excess kurtosis shrinks as alpha approaches 2") {
    auto kurt = [](const std::vector<double>& xs) {
        double m = sample_mean(xs), v = sample_var(xs), k = 0.0;
        for (double x : xs) k += std::pow(x - m, 4.0);
        return k / (static_cast<double>(xs.size()) * v * v) - 3.0;
    };
    Rng rng(derive_seed(31, {9}));
    std::vector<double> ks;
    for (double alpha : {1.5, 1.8, 1.95}) {
        // the raw 4th moment diverges for alpha < 2, so a single sample
        // kurtosis is dominated by the largest draw; the median over batches
        // gives a stable rank statistic
        std::vector<double> batch_kurt;
        for (int b = 0; b < 50; ++b) {
            auto data = alpha_stable_simulate(vec({alpha, 0.0, 1.0, 0.0}), 4000, rng);
            batch_kurt.push_back(kurt(data));
        }
        std::sort(batch_kurt.begin(), batch_kurt.end());
        ks.push_back(batch_kurt[25]);
    }
    CHECK(ks[0] > ks[1]);
    CHECK(ks[1] > ks[2]);
}

// ---- g-and-k ---------------------------------------------------------------

TEST_CASE("quantile function: closed-form reductions") {
    Vector theta = vec({3.0, 1.0, 2.0, 0.5});
    CHECK(gnk_quantile(0.5, theta) == doctest::Approx(3.0).epsilon(1e-14));

    // g = 0, k = 0 reduces to normal quantiles
    Vector normal = vec({1.0, 2.0, 0.0, 0.0});
    for (double p : {0.1, 0.3, 0.7, 0.9})
        CHECK(gnk_quantile(p, normal) ==
              doctest::Approx(1.0 + 2.0 * normal_quantile(p)).epsilon(1e-12));
    CHECK_THROWS(gnk_quantile(0.0, theta));
    CHECK_THROWS(gnk_quantile(1.0, theta));
}

TEST_CASE("quantile function is strictly increasing") {
    Rng rng(derive_seed(31, {10}));
    std::vector<Vector> thetas = {vec({3.0, 1.0, 2.0, 0.5})};
    for (int i = 0; i < 20; ++i)
        thetas.push_back(vec({rng.normal(), rng.exponential(1.0) + 0.05,
                              2.0 * rng.normal(), 2.0 * rng.uniform()}));
    for (const auto& th : thetas) {
        double prev = gnk_quantile(1e-3, th);
        for (int g = 2; g < 1000; ++g) {
            double p = static_cast<double>(g) / 1000.0;
            double q = gnk_quantile(p, th);
            CHECK(q > prev);
            prev = q;
        }
    }
}

TEST_CASE("empirical octiles match the quantile function at the true parameters") {
    Vector theta = vec({3.0, 1.0, 2.0, 0.5});
    Rng rng(derive_seed(31, {11}));
    auto data = gnk_simulate(theta, 1000000, rng);
    std::sort(data.begin(), data.end());
    const int n = static_cast<int>(data.size());
    for (int j = 1; j <= 7; ++j) {
        double p = j / 8.0;
        double emp = data[static_cast<std::size_t>(p * (n - 1))];
        // density-based standard error of an empirical quantile
        double h = 1e-4;
        double dens = (2.0 * h) / (gnk_quantile(p + h, theta) - gnk_quantile(p - h, theta));
        double se = std::sqrt(p * (1.0 - p) / n) / dens;
        CHECK(std::abs(emp - gnk_quantile(p, theta)) < 4.0 * se + 1e-4);
    }
}

TEST_CASE("octile summaries: hand oracle on the exact N(0,1) octile grid") {
    std::vector<double> grid;
    for (int j = 1; j <= 7; ++j) grid.push_back(normal_quantile(j / 8.0));
    SummaryVector s = gnk_summarize(grid);
    // with 7 sorted points the type-7 octiles interpolate at h = 0.75 j
    auto oracle_oct = [&](int j) {
        double h = 0.75 * j;
        auto lo = static_cast<std::size_t>(std::floor(h));
        if (lo >= grid.size() - 1) return grid.back();
        return grid[lo] + (h - std::floor(h)) * (grid[lo + 1] - grid[lo]);
    };
    double o1 = oracle_oct(1), o2 = oracle_oct(2), o3 = oracle_oct(3), o4 = oracle_oct(4),
           o5 = oracle_oct(5), o6 = oracle_oct(6), o7 = oracle_oct(7);
    CHECK(s[0] == doctest::Approx(o4).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(o6 - o2).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx((o7 - o5 + o3 - o1) / (o6 - o2)).epsilon(1e-12));
    CHECK(s[3] == doctest::Approx((o6 + o2 - 2.0 * o4) / (o6 - o2)).epsilon(1e-12));
}

TEST_CASE("octile summaries: affine equivariance and symmetry limits") {
    Rng rng(derive_seed(31, {12}));
    std::vector<double> x(200000);
    for (auto& v : x) v = rng.normal();
    SummaryVector s = gnk_summarize(x);
    CHECK(std::abs(s[0]) < 0.01);
    CHECK(std::abs(s[1] - 1.349) < 0.02);
    CHECK(std::abs(s[3]) < 0.02);

    const double a = 3.0, b = 2.0;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;
    SummaryVector sy = gnk_summarize(y);
    CHECK(sy[0] == doctest::Approx(a * s[0] + b).epsilon(1e-9));
    CHECK(sy[1] == doctest::Approx(a * s[1]).epsilon(1e-12));
    CHECK(sy[2] == doctest::Approx(s[2]).epsilon(1e-9));
    CHECK(sy[3] == doctest::Approx(s[3]).epsilon(1e-9));

    CHECK_THROWS_WITH(gnk_summarize(std::vector<double>(50, 2.0)),
                      doctest::Contains("degenerate"));
}

// ---- toads -----------------------------------------------------------------

TEST_CASE("forced return keeps every toad at the origin") {
    Rng rng(derive_seed(31, {13}));
    auto obs = toads_simulate(vec({1.7, 35.0, 1.0}), 20, 5, rng);
    CHECK(obs.positions.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("no returns gives a stable-increment random walk") {
    Rng rng(derive_seed(31, {14}));
    auto obs = toads_simulate(vec({1.7, 35.0, 0.0}), 200, 100, rng);
    std::vector<double> incs;
    for (int j = 0; j < 100; ++j)
        for (int i = 0; i + 1 < 200; ++i)
            incs.push_back(obs.positions(i + 1, j) - obs.positions(i, j));
    std::sort(incs.begin(), incs.end());
    // symmetric stable: median near 0, IQR ~= 2 gamma tan(pi/(2 alpha))... use
    // the MC quantiles of a direct sampler as the oracle instead
    Rng oracle_rng(derive_seed(31, {15}));
    std::vector<double> oracle(incs.size());
    for (auto& v : oracle) v = 35.0 * stable_standard_draw(1.7, 0.0, oracle_rng);
    std::sort(oracle.begin(), oracle.end());
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
        auto idx = static_cast<std::size_t>(p * (static_cast<double>(incs.size()) - 1.0));
        CHECK(std::abs(incs[idx] - oracle[idx]) < 2.0);
    }
}

TEST_CASE("toads hand oracle: 4x1 observation matrix") {
    ToadsObservation obs;
    obs.positions = Matrix(4, 1);
    obs.positions << 0.0, 3.0, 50.0, 200.0;
    SummaryVector s = toads_summarize(obs);
    REQUIRE(s.size() == 12);
    // lag 1: |0-3|=3 (return), |3-50|=47, |50-200|=150
    CHECK(s[0] == 1.0);
    CHECK(s[1] == doctest::Approx(std::log(98.5 - 47.0)).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(std::log(150.0 - 98.5)).epsilon(1e-14));
    // lag 2: |0-50|=50, |3-200|=197
    CHECK(s[3] == 0.0);
    CHECK(s[4] == doctest::Approx(std::log(123.5 - 50.0)).epsilon(1e-14));
    CHECK(s[5] == doctest::Approx(std::log(197.0 - 123.5)).epsilon(1e-14));
    // lags 4 and 8: no displacement pairs -> count 0, sentinel spreads
    for (int i = 6; i < 12; ++i) CHECK(s[i] == 0.0);
}

TEST_CASE("all-zero observations take the sentinel path") {
    ToadsObservation obs;
    obs.positions = Matrix::Zero(10, 3);
    SummaryVector s = toads_summarize(obs);
    CHECK(s[0] == 27.0);  // lag 1: 9 pairs x 3 toads
    CHECK(s[3] == 24.0);
    CHECK(s[6] == 18.0);
    CHECK(s[9] == 6.0);
    for (int k : {1, 2, 4, 5, 7, 8, 10, 11}) CHECK(s[k] == kToadsSentinel);
}

TEST_CASE("positive scaling shifts the log-spread statistics by log 2") {
    ToadsObservation obs;
    obs.positions = Matrix(4, 1);
    obs.positions << 0.0, 20.0, 100.0, 400.0;  // every displacement > 10 m
    ToadsObservation scaled;
    scaled.positions = 2.0 * obs.positions;
    SummaryVector a = toads_summarize(obs);
    SummaryVector b = toads_summarize(scaled);
    CHECK(b[0] == a[0]);
    CHECK(b[1] == doctest::Approx(a[1] + std::log(2.0)).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(a[2] + std::log(2.0)).epsilon(1e-12));
    CHECK(b[4] == doctest::Approx(a[4] + std::log(2.0)).epsilon(1e-12));
    CHECK(b[5] == doctest::Approx(a[5] + std::log(2.0)).epsilon(1e-12));
}

// ---- registry and uniform interface ----------------------------------------

TEST_CASE("registry exposes the four simulators with consistent contracts") {
    std::vector<std::pair<std::string, Vector>> cases = {
        {"toy", vec({0.3})},
        {"alpha-stable", vec({1.8, 0.5, 1.0, 0.0})},
        {"gnk", vec({3.0, 1.0, 2.0, 0.5})},
        {"toads", vec({1.7, 35.0, 0.6})},
    };
    CHECK(simulator_names().size() == 4);
    for (const auto& [name, theta] : cases) {
        auto sim = make_simulator(name);
        CHECK(sim->name() == name);
        CHECK(sim->param_dim() == theta.size());

        // constrain/unconstrain round trip on the open region
        Vector back = sim->constrain(sim->unconstrain(theta));
        CHECK((back - theta).cwiseAbs().maxCoeff() < 1e-12);

        // bit-reproducible simulate + summarize
        Rng a(derive_seed(31, {16}));
        Rng b(derive_seed(31, {16}));
        int n = name == "toads" ? 10 : 100;
        SummaryVector sa = sim->summarize(sim->simulate(theta, n, a));
        SummaryVector sb = sim->summarize(sim->simulate(theta, n, b));
        CHECK(sa.size() == sim->summary_dim());
        CHECK((sa - sb).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_THROWS(make_simulator("nope"));
}
