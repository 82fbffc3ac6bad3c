#include <cmath>
#include <sstream>

#include "bslwg/rng.hpp"
#include "bslwg/stats.hpp"
#include "bslwg/simulators.hpp"
#include "bslwg/wg_flow.hpp"
#include "doctest.h"

using namespace bslwg;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

ParticleCloud gaussian_cloud(int m, int d, Rng& rng) {
    ParticleCloud cloud;
    cloud.points = Matrix(m, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) cloud.points(i, j) = rng.normal();
    return cloud;
}

ParticleCloud toy_summary_cloud(int m, Rng& rng) {
    ParticleCloud cloud;
    cloud.points = Matrix(m, 2);
    for (int i = 0; i < m; ++i)
        cloud.points.row(i) = toy_summarize(toy_simulate(0.0, 50, rng)).transpose();
    return cloud;
}

}  // namespace

TEST_CASE("velocity vanishes at the target") {
    auto std2 = GaussianMixture::standard_normal(2);
    CHECK(velocity(std2, vec({0.3, -2.0})).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(velocity(std2, vec({5.0, 5.0})).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("velocity of a shifted unit Gaussian at its center") {
    GaussianMixture mix = GaussianMixture::standard_normal(2);
    mix.means[0] = vec({1.0, -2.0});
    Vector v = velocity(mix, vec({1.0, -2.0}));
    CHECK(v[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("flow step is the identity when the mixture is the target") {
    Rng rng(derive_seed(11, {1}));
    ParticleCloud cloud = gaussian_cloud(200, 3, rng);
    ParticleCloud moved = flow_step(cloud, GaussianMixture::standard_normal(3), 0.05);
    CHECK((moved.points - cloud.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar hand oracle: particle at 2 under a unit mixture centered at 2") {
    GaussianMixture mix = GaussianMixture::standard_normal(1);
    mix.means[0] = vec({2.0});
    ParticleCloud cloud;
    cloud.points = Matrix::Constant(1, 1, 2.0);
    // v(2) = -2 - 0, x' = 2 + 0.1 * (-2) = 1.8
    ParticleCloud moved = flow_step(cloud, mix, 0.1);
    CHECK(moved.points(0, 0) == doctest::Approx(1.8).epsilon(1e-14));
}

TEST_CASE("lower bound equals (d/2) log 2pi at the target") {
    Rng rng(derive_seed(11, {2}));
    ParticleCloud cloud = gaussian_cloud(500, 2, rng);
    double lb = wg_lower_bound(GaussianMixture::standard_normal(2), cloud);
    CHECK(lb == doctest::Approx(std::log(2.0 * M_PI)).epsilon(1e-12));
    ParticleCloud cloud1 = gaussian_cloud(500, 1, rng);
    CHECK(wg_lower_bound(GaussianMixture::standard_normal(1), cloud1) ==
          doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("lower bound matches naive summation") {
    Rng rng(derive_seed(11, {3}));
    ParticleCloud cloud = gaussian_cloud(64, 2, rng);
    GaussianMixture mix = GaussianMixture::standard_normal(2);
    mix.means[0] = vec({0.4, 0.1});
    double lb = wg_lower_bound(mix, cloud);
    double naive = 0.0;
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        Vector s = cloud.points.row(i).transpose();
        naive += -0.5 * s.squaredNorm() - log_density(mix, s);
    }
    naive /= static_cast<double>(cloud.size());
    CHECK(lb == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("training on an already-Gaussian cloud stops quickly near the target") {
    Rng rng(derive_seed(11, {4}));
    ParticleCloud train = gaussian_cloud(10000, 2, rng);
    ParticleCloud val = gaussian_cloud(4000, 2, rng);
    WGConfig cfg;
    cfg.max_iters = 300;
    WGTransform wg = train_wg(train, val, cfg, derive_seed(11, {5}));
    CHECK(std::abs(wg.final_lb - std::log(2.0 * M_PI)) < 0.05);
    // early stopping engaged: well under the iteration cap, and the returned
    // transform is truncated at the best smoothed-LB iteration
    CHECK(wg.iterations < cfg.max_iters);
    CHECK(static_cast<int>(wg.steps.size()) <= wg.iterations);
}

TEST_CASE("training Gaussianizes the toy summary cloud") {
    Rng rng(derive_seed(11, {6}));
    ParticleCloud train = toy_summary_cloud(1500, rng);
    ParticleCloud val = toy_summary_cloud(1500, rng);
    WGConfig cfg;
    cfg.max_iters = 200;
    WGTransform wg = train_wg(train, val, cfg, derive_seed(11, {7}));

    ParticleCloud val_t = apply(wg, val);
    double before = mardia(val.points).skewness;
    double after = mardia(val_t.points).skewness;
    CHECK(after < 0.25 * before);
}

TEST_CASE("empty validation cloud is rejected") {
    Rng rng(derive_seed(11, {8}));
    ParticleCloud train = gaussian_cloud(100, 2, rng);
    ParticleCloud empty;
    empty.points = Matrix(0, 2);
    CHECK_THROWS(train_wg(train, empty, {}, 1));
}

TEST_CASE("identity transform leaves summaries unchanged") {
    auto id = WGTransform::identity(3);
    Vector s = vec({1.0, -2.0, 0.5});
    CHECK((apply(id, s) - s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply replays the training trajectory bit for bit") {
    Rng rng(derive_seed(11, {9}));
    ParticleCloud train = toy_summary_cloud(900, rng);
    ParticleCloud val = toy_summary_cloud(600, rng);
    WGConfig cfg;
    cfg.max_iters = 40;
    WGTransform wg = train_wg(train, val, cfg, derive_seed(11, {10}));

    // replay one training particle manually: standardize, then step through
    Vector s = train.points.row(17).transpose();
    Vector x = ((s - wg.shift).array() / wg.scale.array()).matrix();
    for (const auto& step : wg.steps) {
        Vector v = velocity(step.mixture, x);
        x = x + step.epsilon * v;
    }
    Vector direct = apply(wg, s);
    CHECK((direct - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wg_moments of the identity transform equals sample_moments") {
    Rng rng(derive_seed(11, {11}));
    std::vector<SummaryVector> batch;
    for (int i = 0; i < 40; ++i) batch.push_back(vec({rng.normal(), rng.normal() * 2.0}));
    auto a = wg_moments(WGTransform::identity(2), batch);
    auto b = sample_moments(batch);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wg_moments equals a naive map-then-moment oracle") {
    Rng rng(derive_seed(11, {12}));
    ParticleCloud train = toy_summary_cloud(900, rng);
    ParticleCloud val = toy_summary_cloud(600, rng);
    WGConfig cfg;
    cfg.max_iters = 30;
    WGTransform wg = train_wg(train, val, cfg, derive_seed(11, {13}));

    std::vector<SummaryVector> batch;
    for (int i = 0; i < 50; ++i) batch.push_back(val.points.row(i).transpose());
    auto est = wg_moments(wg, batch);

    std::vector<SummaryVector> mapped;
    for (const auto& s : batch) mapped.push_back(apply(wg, s));
    auto oracle = sample_moments(mapped);
    CHECK((est.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((est.cov - oracle.cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("serialization round-trips bit-identically") {
    Rng rng(derive_seed(11, {14}));
    ParticleCloud train = toy_summary_cloud(900, rng);
    ParticleCloud val = toy_summary_cloud(600, rng);
    WGConfig cfg;
    cfg.max_iters = 25;
    WGTransform wg = train_wg(train, val, cfg, derive_seed(11, {15}));

    std::stringstream ss;
    save_wg(wg, ss);
    WGTransform loaded = load_wg(ss);

    CHECK(loaded.steps.size() == wg.steps.size());
    CHECK(loaded.seed == wg.seed);
    CHECK(loaded.final_lb == wg.final_lb);  // exact, hexfloat round-trip
    for (int i = 0; i < 20; ++i) {
        Vector s = val.points.row(i).transpose();
        Vector a = apply(wg, s);
        Vector b = apply(loaded, s);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}
