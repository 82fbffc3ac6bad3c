#include "bslwg/simulators.hpp"

#include <algorithm>
#include <cmath>

#include "bslwg/stats.hpp"

namespace bslwg {

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0, "p outside (0,1)");
    // Acklam's rational approximation
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    // one Halley refinement against the exact CDF
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

// ---- toy -------------------------------------------------------------------

std::vector<double> toy_simulate(double theta, int n, Rng& rng) {
    require(n >= 2, "n must be >= 2");
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        double v = rng.exponential(0.01);  // Gamma(shape 1, rate 0.01)
        y[i] = theta + (v - 100.0) / 50.0;
    }
    return y;
}

SummaryVector toy_summarize(const std::vector<double>& dataset) {
    require(dataset.size() >= 2, "need at least 2 observations");
    const auto n = static_cast<double>(dataset.size());
    double mean = 0.0;
    for (double v : dataset) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : dataset) ss += (v - mean) * (v - mean);
    Vector s(2);
    s << mean, ss / (n - 1.0);
    return s;
}

// ---- alpha-stable ----------------------------------------------------------

double stable_standard_draw(double alpha, double beta, Rng& rng) {
    const double pi = 3.14159265358979323846;
    double u = rng.uniform(-pi / 2.0, pi / 2.0);
    double w = rng.exponential(1.0);
    if (alpha == 2.0) return 2.0 * std::sin(u) * std::sqrt(w);
    double tan_half = std::tan(pi * alpha / 2.0);
    double b = std::atan(beta * tan_half) / alpha;
    double s = std::pow(1.0 + beta * beta * tan_half * tan_half, 1.0 / (2.0 * alpha));
    double x = s * std::sin(alpha * (u + b)) / std::pow(std::cos(u), 1.0 / alpha) *
               std::pow(std::cos(u - alpha * (u + b)) / w, (1.0 - alpha) / alpha);
    return x;
}

std::vector<double> alpha_stable_simulate(const Vector& theta, int n, Rng& rng,
                                          bool boundary_ok) {
    require(theta.size() == 4, "theta must be (alpha, beta, gamma, delta)");
    double alpha = theta[0], beta = theta[1], gamma = theta[2], delta = theta[3];
    bool alpha_ok = boundary_ok ? (alpha > 1.1 && alpha <= 2.0)
                                : (alpha > 1.1 && alpha < 2.0);
    require(alpha_ok && beta > -1.0 && beta < 1.0 && gamma > 0.0,
            "alpha-stable parameters outside constraints");
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i)
        y[i] = gamma * stable_standard_draw(alpha, beta, rng) + delta;
    return y;
}

SummaryVector alpha_stable_summarize(const std::vector<double>& dataset) {
    require(dataset.size() >= 20, "need at least 20 observations");
    std::vector<double> sorted = dataset;
    std::sort(sorted.begin(), sorted.end());
    double q05 = quantile_sorted(sorted, 0.05);
    double q25 = quantile_sorted(sorted, 0.25);
    double q50 = quantile_sorted(sorted, 0.50);
    double q75 = quantile_sorted(sorted, 0.75);
    double q95 = quantile_sorted(sorted, 0.95);
    require(q75 - q25 > 0.0 && q95 - q05 > 0.0, "degenerate sample");
    Vector s(4);
    s << (q95 - q05) / (q75 - q25), (q95 + q05 - 2.0 * q50) / (q95 - q05),
        q75 - q25, q50;
    return s;
}

Vector alpha_stable_unconstrain(const Vector& natural) {
    require(natural.size() == 4, "theta must be length 4");
    Vector w(4);
    w[0] = std::log((natural[0] - 1.1) / (2.0 - natural[0]));
    w[1] = std::log((natural[1] + 1.0) / (1.0 - natural[1]));
    w[2] = std::log(natural[2]);
    w[3] = natural[3];
    return w;
}

Vector alpha_stable_constrain(const Vector& working) {
    require(working.size() == 4, "theta must be length 4");
    Vector t(4);
    t[0] = 1.1 + 0.9 / (1.0 + std::exp(-working[0]));
    t[1] = std::tanh(working[1] / 2.0);
    t[2] = std::exp(working[2]);
    t[3] = working[3];
    // the map is total over R; keep saturated values off the open boundaries
    t[0] = std::clamp(t[0], 1.1 + 1e-9, 2.0 - 1e-9);
    t[1] = std::clamp(t[1], -1.0 + 1e-12, 1.0 - 1e-12);
    t[2] = std::clamp(t[2], 1e-300, 1e300);
    return t;
}

// ---- g-and-k ---------------------------------------------------------------

double gnk_quantile(double p, const Vector& theta) {
    require(theta.size() == 4, "theta must be (A, B, g, k)");
    double A = theta[0], B = theta[1], g = theta[2], k = theta[3];
    require(B > 0.0 && k > -0.5, "g-and-k parameters outside constraints");
    double z = normal_quantile(p);
    double egz = std::exp(-g * z);
    return A + B * (1.0 + 0.8 * (1.0 - egz) / (1.0 + egz)) *
                   std::pow(1.0 + z * z, k) * z;
}

std::vector<double> gnk_simulate(const Vector& theta, int n, Rng& rng) {
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = gnk_quantile(rng.uniform(), theta);
    return y;
}

SummaryVector gnk_summarize(const std::vector<double>& dataset) {
    require(dataset.size() >= 7, "need at least 7 observations");
    std::vector<double> sorted = dataset;
    std::sort(sorted.begin(), sorted.end());
    double o[8];
    for (int j = 1; j <= 7; ++j) o[j] = quantile_sorted(sorted, j / 8.0);
    double sB = o[6] - o[2];
    require(sB > 0.0, "degenerate sample");
    Vector s(4);
    s << o[4], sB, (o[7] - o[5] + o[3] - o[1]) / sB, (o[6] + o[2] - 2.0 * o[4]) / sB;
    return s;
}

// ---- toads -----------------------------------------------------------------

ToadsObservation toads_simulate(const Vector& theta, int n_d, int n_t, Rng& rng) {
    require(theta.size() == 3, "theta must be (alpha, gamma, p0)");
    double alpha = theta[0], gamma = theta[1], p0 = theta[2];
    require(alpha > 1.1 && alpha < 2.0 && gamma > 0.0 && p0 >= 0.0 && p0 <= 1.0,
            "toads parameters outside constraints");
    require(n_d >= 1 && n_t >= 1, "empty observation grid");
    ToadsObservation obs;
    obs.positions = Matrix(n_d, n_t);
    for (int j = 0; j < n_t; ++j) {
        std::vector<double> refuges{0.0};
        double pos = 0.0;
        for (int i = 0; i < n_d; ++i) {
            double delta = gamma * stable_standard_draw(alpha, 0.0, rng);
            if (rng.uniform() < p0) {
                pos = refuges[rng.uniform_index(refuges.size())];
            } else {
                pos += delta;
                refuges.push_back(pos);
            }
            obs.positions(i, j) = pos;
        }
    }
    return obs;
}

SummaryVector toads_summarize(const ToadsObservation& obs) {
    require(obs.positions.allFinite(), "non-finite positions");
    const int n_d = static_cast<int>(obs.positions.rows());
    const int n_t = static_cast<int>(obs.positions.cols());
    static const int lags[] = {1, 2, 4, 8};
    Vector s(12);
    int out = 0;
    for (int lag : lags) {
        std::vector<double> nonret;
        int returns = 0;
        for (int j = 0; j < n_t; ++j) {
            for (int i = 0; i + lag < n_d; ++i) {
                double disp = std::abs(obs.positions(i + lag, j) - obs.positions(i, j));
                if (disp < kToadsReturnThreshold)
                    ++returns;
                else
                    nonret.push_back(disp);
            }
        }
        s[out++] = static_cast<double>(returns);
        // log spread statistics need at least two distinct displacements
        if (nonret.size() < 2) {
            s[out++] = kToadsSentinel;
            s[out++] = kToadsSentinel;
            continue;
        }
        std::sort(nonret.begin(), nonret.end());
        double lo = nonret.front();
        double med = quantile_sorted(nonret, 0.5);
        double hi = nonret.back();
        s[out++] = (med > lo) ? std::log(med - lo) : kToadsSentinel;
        s[out++] = (hi > med) ? std::log(hi - med) : kToadsSentinel;
    }
    return s;
}

// ---- registry --------------------------------------------------------------

namespace {

class ToySimulator final : public Simulator {
public:
    std::string name() const override { return "toy"; }
    int param_dim() const override { return 1; }
    int summary_dim() const override { return 2; }
    std::vector<double> simulate(const Vector& theta, int n, Rng& rng) const override {
        return toy_simulate(theta[0], n, rng);
    }
    SummaryVector summarize(const std::vector<double>& dataset) const override {
        return toy_summarize(dataset);
    }
    Vector constrain(const Vector& w) const override { return w; }
    Vector unconstrain(const Vector& t) const override { return t; }
};

class AlphaStableSimulator final : public Simulator {
public:
    std::string name() const override { return "alpha-stable"; }
    int param_dim() const override { return 4; }
    int summary_dim() const override { return 4; }
    std::vector<double> simulate(const Vector& theta, int n, Rng& rng) const override {
        return alpha_stable_simulate(theta, n, rng);
    }
    SummaryVector summarize(const std::vector<double>& dataset) const override {
        return alpha_stable_summarize(dataset);
    }
    Vector constrain(const Vector& w) const override { return alpha_stable_constrain(w); }
    Vector unconstrain(const Vector& t) const override { return alpha_stable_unconstrain(t); }
};

class GnkSimulator final : public Simulator {
public:
    std::string name() const override { return "gnk"; }
    int param_dim() const override { return 4; }
    int summary_dim() const override { return 4; }
    std::vector<double> simulate(const Vector& theta, int n, Rng& rng) const override {
        return gnk_simulate(theta, n, rng);
    }
    SummaryVector summarize(const std::vector<double>& dataset) const override {
        return gnk_summarize(dataset);
    }
    Vector constrain(const Vector& w) const override {
        Vector t(4);
        t << w[0], std::exp(w[1]), w[2], std::exp(w[3]) - 0.5;
        t[1] = std::clamp(t[1], 1e-300, 1e300);
        t[3] = std::clamp(t[3], -0.5 + 1e-12, 1e300);
        return t;
    }
    Vector unconstrain(const Vector& t) const override {
        require(t[1] > 0.0 && t[3] > -0.5, "g-and-k parameters outside constraints");
        Vector w(4);
        w << t[0], std::log(t[1]), t[2], std::log(t[3] + 0.5);
        return w;
    }
};

class ToadsSimulator final : public Simulator {
public:
    explicit ToadsSimulator(int n_d) : n_d_(n_d) {}
    std::string name() const override { return "toads"; }
    int param_dim() const override { return 3; }
    int summary_dim() const override { return 12; }
    /// `n` plays the role of the number of toads n_t; n_d is fixed.
    std::vector<double> simulate(const Vector& theta, int n, Rng& rng) const override {
        ToadsObservation obs = toads_simulate(theta, n_d_, n, rng);
        std::vector<double> flat(obs.positions.size());
        Eigen::Map<Matrix>(flat.data(), n_d_, n) = obs.positions;
        return flat;
    }
    SummaryVector summarize(const std::vector<double>& dataset) const override {
        require(static_cast<int>(dataset.size()) % n_d_ == 0,
                "dataset size not a multiple of n_d");
        int n_t = static_cast<int>(dataset.size()) / n_d_;
        ToadsObservation obs;
        obs.positions = Eigen::Map<const Matrix>(dataset.data(), n_d_, n_t);
        return toads_summarize(obs);
    }
    Vector constrain(const Vector& w) const override {
        Vector t(3);
        t[0] = 1.1 + 0.9 / (1.0 + std::exp(-w[0]));
        t[1] = std::exp(w[1]);
        t[2] = 1.0 / (1.0 + std::exp(-w[2]));
        t[0] = std::clamp(t[0], 1.1 + 1e-9, 2.0 - 1e-9);
        t[1] = std::clamp(t[1], 1e-300, 1e300);
        return t;
    }
    Vector unconstrain(const Vector& t) const override {
        Vector w(3);
        w[0] = std::log((t[0] - 1.1) / (2.0 - t[0]));
        w[1] = std::log(t[1]);
        w[2] = std::log(t[2] / (1.0 - t[2]));
        return w;
    }

private:
    int n_d_;
};

}  // namespace

std::unique_ptr<Simulator> make_simulator(const std::string& name) {
    if (name == "toy") return std::make_unique<ToySimulator>();
    if (name == "alpha-stable") return std::make_unique<AlphaStableSimulator>();
    if (name == "gnk") return std::make_unique<GnkSimulator>();
    if (name == "toads") return std::make_unique<ToadsSimulator>(63);
    throw std::runtime_error("unknown simulator: " + name);
}

std::vector<std::string> simulator_names() {
    return {"toy", "alpha-stable", "gnk", "toads"};
}

}  // namespace bslwg
