#include "bslwg/wg_flow.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace bslwg {

namespace {

constexpr const char* kArtifactTag = "wg-transform";
constexpr int kArtifactVersion = 1;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_double(const std::string& tok) {
    return std::strtod(tok.c_str(), nullptr);
}

void write_vector(std::ostream& os, const Vector& v) {
    os << v.size();
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << fmt_double(v[i]);
    os << '\n';
}

Vector read_vector(std::istream& is) {
    Eigen::Index n;
    is >> n;
    require(is.good() && n >= 0, "corrupt transform artifact");
    Vector v(n);
    std::string tok;
    for (Eigen::Index i = 0; i < n; ++i) {
        is >> tok;
        v[i] = parse_double(tok);
    }
    return v;
}

void write_matrix_rowmajor(std::ostream& os, const Matrix& m) {
    os << m.rows() << ' ' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << fmt_double(m(r, c));
    os << '\n';
}

Matrix read_matrix_rowmajor(std::istream& is) {
    Eigen::Index rows, cols;
    is >> rows >> cols;
    require(is.good() && rows >= 0 && cols >= 0, "corrupt transform artifact");
    Matrix m(rows, cols);
    std::string tok;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            is >> tok;
            m(r, c) = parse_double(tok);
        }
    return m;
}

}  // namespace

WGTransform WGTransform::identity(Eigen::Index d) {
    WGTransform t;
    t.d = d;
    t.shift = Vector::Zero(d);
    t.scale = Vector::Ones(d);
    return t;
}

Vector velocity(const GaussianMixture& mix, const Vector& x) {
    return -x - grad_log_density(mix, x);
}

ParticleCloud flow_step(const ParticleCloud& cloud, const GaussianMixture& mix,
                        double epsilon) {
    require(epsilon > 0.0, "epsilon must be positive");
    Matrix v = -cloud.points - grad_log_density_cloud(mix, cloud.points);
    Matrix out = cloud.points + epsilon * v;
    require(out.allFinite(), "flow diverged");
    return ParticleCloud(std::move(out));
}

double wg_lower_bound(const GaussianMixture& mix, const ParticleCloud& validation) {
    require(validation.size() > 0, "empty validation cloud");
    Vector ld = log_density_cloud(mix, validation.points);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < validation.size(); ++i)
        acc += -0.5 * validation.points.row(i).squaredNorm() - ld[i];
    return acc / static_cast<double>(validation.size());
}

namespace {

// Standardize a cloud with the given shift/scale.
ParticleCloud standardize(const ParticleCloud& cloud, const Vector& shift,
                          const Vector& scale) {
    Matrix out = (cloud.points.rowwise() - shift.transpose()).array().rowwise() /
                 scale.transpose().array();
    return ParticleCloud(std::move(out));
}

int select_k(const ParticleCloud& train, const ParticleCloud& validation,
             const WGConfig& cfg, std::uint64_t seed, int iter,
             GaussianMixture& best_mix) {
    double best_ll = -std::numeric_limits<double>::infinity();
    int best_k = cfg.k_candidates.front();
    for (int k : cfg.k_candidates) {
        if (train.size() < static_cast<Eigen::Index>(k) * (train.dim() + 1)) continue;
        Rng rng(derive_seed(seed, {0xf17u, static_cast<std::uint64_t>(iter),
                                   static_cast<std::uint64_t>(k)}));
        EmResult fit = fit_gmm(train, k, cfg.em, rng);
        double ll = mean_log_density(fit.mixture, validation);
        if (ll > best_ll) {
            best_ll = ll;
            best_k = k;
            best_mix = std::move(fit.mixture);
        }
    }
    return best_k;
}

}  // namespace

WGTransform train_wg(const ParticleCloud& train, const ParticleCloud& validation,
                     const WGConfig& config, std::uint64_t seed) {
    require(train.size() > 1, "empty training cloud");
    require(validation.size() > 0, "empty validation cloud");
    require(train.dim() == validation.dim(), "cloud dimension mismatch");
    const auto d = train.dim();

    WGTransform t;
    t.d = d;
    t.seed = seed;
    t.shift = train.points.colwise().mean();
    {
        Matrix cen = train.points.rowwise() - t.shift.transpose();
        t.scale = (cen.array().square().colwise().sum() /
                   static_cast<double>(train.size()))
                      .sqrt()
                      .transpose();
        for (Eigen::Index j = 0; j < d; ++j)
            if (!(t.scale[j] > 0.0)) t.scale[j] = 1.0;
    }

    ParticleCloud cur_train = standardize(train, t.shift, t.scale);
    ParticleCloud cur_val = standardize(validation, t.shift, t.scale);

    std::vector<double> raw_lb;
    std::vector<double> smoothed;
    double best_smoothed = -std::numeric_limits<double>::infinity();
    int best_iter = -1;  // index of the last step kept in the returned transform
    int patience = 0;
    int current_k = config.k_candidates.front();
    GaussianMixture mix;

    for (int iter = 0; iter < config.max_iters; ++iter) {
        if (iter % config.k_refresh == 0) {
            current_k = select_k(cur_train, cur_val, config, seed, iter, mix);
        } else {
            Rng rng(derive_seed(seed, {0xf17u, static_cast<std::uint64_t>(iter)}));
            mix = fit_gmm(cur_train, current_k, config.em, rng).mixture;
        }

        double lb = wg_lower_bound(mix, cur_val);
        raw_lb.push_back(lb);

        double eps = config.epsilon;
        ParticleCloud next_train, next_val;
        int halvings = 0;
        for (;;) {
            try {
                next_train = flow_step(cur_train, mix, eps);
                next_val = flow_step(cur_val, mix, eps);
                break;
            } catch (const std::runtime_error&) {
                if (!config.halve_on_divergence || halvings >= config.max_halvings)
                    throw std::runtime_error("flow diverged at iteration " +
                                             std::to_string(iter));
                eps *= 0.5;
                ++halvings;
            }
        }
        cur_train = std::move(next_train);
        cur_val = std::move(next_val);
        t.steps.push_back({mix, eps});

        if (static_cast<int>(raw_lb.size()) >= config.lb_window) {
            double window_mean = 0.0;
            for (int k = 0; k < config.lb_window; ++k)
                window_mean += raw_lb[raw_lb.size() - 1 - k];
            window_mean /= config.lb_window;
            smoothed.push_back(window_mean);
            // strict improvement: the flow is deterministic given the corpus,
            // so a converged lower bound plateaus exactly and must not keep
            // resetting the patience counter
            if (window_mean > best_smoothed + 1e-10 * (1.0 + std::abs(best_smoothed))) {
                best_smoothed = window_mean;
                best_iter = iter;
                patience = 0;
            } else {
                ++patience;
            }
            if (patience >= config.patience) break;
        } else {
            smoothed.push_back(lb);
        }
    }

    // Keep the transform as of the best smoothed validation lower bound.
    if (best_iter < 0) best_iter = static_cast<int>(t.steps.size()) - 1;
    t.steps.resize(static_cast<std::size_t>(best_iter) + 1);
    t.iterations = static_cast<int>(t.steps.size());
    t.lb_trace = raw_lb;
    t.final_lb = raw_lb[static_cast<std::size_t>(best_iter)];
    return t;
}

SummaryVector apply(const WGTransform& transform, const SummaryVector& s) {
    require(s.size() == transform.d, "dimension mismatch");
    Vector x = (s - transform.shift).array() / transform.scale.array();
    for (const auto& step : transform.steps)
        x += step.epsilon * velocity(step.mixture, x);
    require(x.allFinite(), "transform overflow");
    return x;
}

ParticleCloud apply(const WGTransform& transform, const ParticleCloud& cloud) {
    require(cloud.dim() == transform.d, "dimension mismatch");
    Matrix x = (cloud.points.rowwise() - transform.shift.transpose())
                   .array()
                   .rowwise() /
               transform.scale.transpose().array();
    for (const auto& step : transform.steps) {
        Matrix v = -x - grad_log_density_cloud(step.mixture, x);
        x += step.epsilon * v;
    }
    require(x.allFinite(), "transform overflow");
    return ParticleCloud(std::move(x));
}

SyntheticLikelihoodEstimate wg_moments(const WGTransform& transform,
                                       const std::vector<SummaryVector>& summaries) {
    require(!summaries.empty(), "no summaries");
    Matrix pts(static_cast<Eigen::Index>(summaries.size()), transform.d);
    for (std::size_t i = 0; i < summaries.size(); ++i)
        pts.row(static_cast<Eigen::Index>(i)) = summaries[i].transpose();
    ParticleCloud mapped = apply(transform, ParticleCloud(std::move(pts)));
    std::vector<SummaryVector> rows;
    rows.reserve(summaries.size());
    for (Eigen::Index i = 0; i < mapped.size(); ++i)
        rows.push_back(mapped.points.row(i).transpose());
    return sample_moments(rows);
}

void save_wg(const WGTransform& t, std::ostream& os) {
    os << kArtifactTag << ' ' << kArtifactVersion << '\n';
    os << "d " << t.d << '\n';
    os << "seed " << t.seed << '\n';
    os << "iterations " << t.iterations << '\n';
    os << "final_lb " << fmt_double(t.final_lb) << '\n';
    os << "shift ";
    write_vector(os, t.shift);
    os << "scale ";
    write_vector(os, t.scale);
    os << "lb_trace ";
    write_vector(os, Eigen::Map<const Vector>(t.lb_trace.data(),
                                              static_cast<Eigen::Index>(t.lb_trace.size())));
    os << "steps " << t.steps.size() << '\n';
    for (const auto& step : t.steps) {
        os << "step " << fmt_double(step.epsilon) << ' '
           << step.mixture.components() << '\n';
        os << "weights ";
        write_vector(os, step.mixture.weights);
        for (int k = 0; k < step.mixture.components(); ++k) {
            os << "mean ";
            write_vector(os, step.mixture.means[k]);
            os << "chol ";
            write_matrix_rowmajor(os, step.mixture.chols[k]);
            os << "logdet " << fmt_double(step.mixture.logdets[k]) << '\n';
        }
    }
}

void save_wg(const WGTransform& t, const std::string& path) {
    std::ofstream os(path);
    require(os.good(), "cannot open " + path);
    save_wg(t, os);
}

WGTransform load_wg(std::istream& is) {
    std::string tag, key, tok;
    int version = 0;
    is >> tag >> version;
    require(tag == kArtifactTag && version == kArtifactVersion,
            "unrecognized transform artifact");
    WGTransform t;
    is >> key >> t.d;
    require(key == "d", "corrupt transform artifact");
    is >> key >> t.seed;
    require(key == "seed", "corrupt transform artifact");
    is >> key >> t.iterations;
    require(key == "iterations", "corrupt transform artifact");
    is >> key >> tok;
    require(key == "final_lb", "corrupt transform artifact");
    t.final_lb = parse_double(tok);
    is >> key;
    require(key == "shift", "corrupt transform artifact");
    t.shift = read_vector(is);
    is >> key;
    require(key == "scale", "corrupt transform artifact");
    t.scale = read_vector(is);
    is >> key;
    require(key == "lb_trace", "corrupt transform artifact");
    Vector trace = read_vector(is);
    t.lb_trace.assign(trace.data(), trace.data() + trace.size());
    std::size_t n_steps = 0;
    is >> key >> n_steps;
    require(key == "steps", "corrupt transform artifact");
    for (std::size_t i = 0; i < n_steps; ++i) {
        FlowStep step;
        int K = 0;
        is >> key >> tok >> K;
        require(key == "step" && K >= 1, "corrupt transform artifact");
        step.epsilon = parse_double(tok);
        is >> key;
        require(key == "weights", "corrupt transform artifact");
        step.mixture.weights = read_vector(is);
        for (int k = 0; k < K; ++k) {
            is >> key;
            require(key == "mean", "corrupt transform artifact");
            step.mixture.means.push_back(read_vector(is));
            is >> key;
            require(key == "chol", "corrupt transform artifact");
            step.mixture.chols.push_back(read_matrix_rowmajor(is));
            is >> key >> tok;
            require(key == "logdet", "corrupt transform artifact");
            step.mixture.logdets.push_back(parse_double(tok));
        }
        t.steps.push_back(std::move(step));
    }
    return t;
}

WGTransform load_wg(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open " + path);
    return load_wg(is);
}

}  // namespace bslwg
