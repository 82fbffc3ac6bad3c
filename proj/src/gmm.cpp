#include "bslwg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bslwg/sl_core.hpp"

namespace bslwg {

namespace {

// log N(x; m, L L^T) with L lower-triangular.
double comp_log_density(const Vector& x, const Vector& m, const Matrix& chol,
                        double logdet) {
    Vector z = chol.triangularView<Eigen::Lower>().solve(x - m);
    return -0.5 * static_cast<double>(x.size()) * kLog2Pi - 0.5 * logdet -
           0.5 * z.squaredNorm();
}

double log_sum_exp(const Vector& v) {
    double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

// Per-component log w_k + log N(x; ...) terms.
Vector component_log_terms(const GaussianMixture& mix, const Vector& x) {
    const int K = mix.components();
    Vector terms(K);
    for (int k = 0; k < K; ++k) {
        double lw = mix.weights[k] > 0.0 ? std::log(mix.weights[k])
                                         : -std::numeric_limits<double>::infinity();
        terms[k] = lw + comp_log_density(x, mix.means[k], mix.chols[k], mix.logdets[k]);
    }
    return terms;
}

// K x M matrix of log w_k + log N(x_i; ...) for a whole cloud; optionally
// keeps the per-component whitened residuals L_k^{-1}(x_i - m_k).
Matrix cloud_log_terms(const GaussianMixture& mix, const Matrix& pts,
                       std::vector<Matrix>* whitened) {
    const int K = mix.components();
    const auto M = pts.rows();
    const auto d = pts.cols();
    const double base = -0.5 * static_cast<double>(d) * kLog2Pi;
    if (whitened) whitened->resize(static_cast<std::size_t>(K));
    Matrix terms(K, M);
    for (int k = 0; k < K; ++k) {
        double lw = mix.weights[k] > 0.0 ? std::log(mix.weights[k])
                                         : -std::numeric_limits<double>::infinity();
        Matrix diff = pts.transpose().colwise() - mix.means[static_cast<std::size_t>(k)];
        mix.chols[static_cast<std::size_t>(k)]
            .triangularView<Eigen::Lower>()
            .solveInPlace(diff);
        terms.row(k) =
            (lw + base - 0.5 * mix.logdets[static_cast<std::size_t>(k)]) -
            0.5 * diff.colwise().squaredNorm().array();
        if (whitened) (*whitened)[static_cast<std::size_t>(k)] = std::move(diff);
    }
    return terms;
}

// Column-wise log-sum-exp of a K x M matrix.
Vector colwise_log_sum_exp(const Matrix& terms) {
    Vector mx = terms.colwise().maxCoeff();
    Vector out(terms.cols());
    for (Eigen::Index j = 0; j < terms.cols(); ++j) {
        if (!std::isfinite(mx[j])) {
            out[j] = mx[j];
            continue;
        }
        out[j] = mx[j] + std::log((terms.col(j).array() - mx[j]).exp().sum());
    }
    return out;
}

// Eigenvalue-floored Cholesky of a symmetric matrix.
void floored_chol(const Matrix& cov, double floor, Matrix& chol, double& logdet) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    Vector ev = es.eigenvalues().cwiseMax(floor);
    Matrix fixed = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Eigen::LLT<Matrix> llt(fixed);
    if (llt.info() != Eigen::Success) {
        // floor was at the edge of representability; fall back to diagonal
        fixed = Matrix(ev.cwiseMax(floor).asDiagonal());
        llt.compute(fixed);
    }
    chol = llt.matrixL();
    logdet = 2.0 * chol.diagonal().array().log().sum();
}

std::vector<Vector> kmeans_pp_init(const Matrix& pts, int K, Rng& rng) {
    const auto M = pts.rows();
    std::vector<Vector> centers;
    centers.reserve(K);
    centers.push_back(pts.row(rng.uniform_index(M)).transpose());
    Vector d2 = Vector::Constant(M, std::numeric_limits<double>::max());
    while (static_cast<int>(centers.size()) < K) {
        for (Eigen::Index i = 0; i < M; ++i) {
            double dist = (pts.row(i).transpose() - centers.back()).squaredNorm();
            d2[i] = std::min(d2[i], dist);
        }
        double total = d2.sum();
        if (total <= 0.0) {
            centers.push_back(pts.row(rng.uniform_index(M)).transpose());
            continue;
        }
        double u = rng.uniform() * total;
        Eigen::Index pick = 0;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < M; ++i) {
            acc += d2[i];
            if (acc >= u) { pick = i; break; }
        }
        centers.push_back(pts.row(pick).transpose());
    }
    return centers;
}

struct FitState {
    GaussianMixture mix;
    std::vector<double> trace;
    double final_ll = -std::numeric_limits<double>::infinity();
};

FitState run_em_once(const Matrix& pts, int K, const EmConfig& cfg, double floor,
                     Rng& rng) {
    const auto M = pts.rows();
    const auto d = pts.cols();

    auto centers = kmeans_pp_init(pts, K, rng);
    // a few Lloyd iterations to settle the seeding
    std::vector<int> assign(M, 0);
    for (int it = 0; it < cfg.kmeans_iters; ++it) {
        for (Eigen::Index i = 0; i < M; ++i) {
            double best = std::numeric_limits<double>::max();
            for (int k = 0; k < K; ++k) {
                double dist = (pts.row(i).transpose() - centers[k]).squaredNorm();
                if (dist < best) { best = dist; assign[i] = k; }
            }
        }
        for (int k = 0; k < K; ++k) {
            Vector sum = Vector::Zero(d);
            int count = 0;
            for (Eigen::Index i = 0; i < M; ++i)
                if (assign[i] == k) { sum += pts.row(i).transpose(); ++count; }
            if (count > 0) centers[k] = sum / count;
        }
    }

    FitState st;
    st.mix.weights = Vector::Constant(K, 1.0 / K);
    st.mix.means = centers;
    st.mix.chols.assign(K, Matrix::Identity(d, d));
    st.mix.logdets.assign(K, 0.0);
    // seed covariances from the global cloud covariance
    {
        Vector gm = pts.colwise().mean();
        Matrix cen = pts.rowwise() - gm.transpose();
        Matrix cov = (cen.transpose() * cen) / static_cast<double>(M);
        Matrix chol;
        double logdet;
        floored_chol(cov, floor, chol, logdet);
        for (int k = 0; k < K; ++k) { st.mix.chols[k] = chol; st.mix.logdets[k] = logdet; }
    }

    Matrix resp(M, K);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iters; ++it) {
        // E step (batched over the cloud)
        Matrix terms = cloud_log_terms(st.mix, pts, nullptr);
        Vector lse = colwise_log_sum_exp(terms);
        double ll = lse.sum() / static_cast<double>(M);
        resp = (terms.rowwise() - lse.transpose()).array().exp().transpose();
        st.trace.push_back(ll);
        st.final_ll = ll;
        if (it > 0 && std::abs(ll - prev_ll) < cfg.tol * (std::abs(prev_ll) + 1.0)) break;
        prev_ll = ll;

        // M step
        Vector nk = resp.colwise().sum();
        for (int k = 0; k < K; ++k) {
            double n = std::max(nk[k], 1e-12);
            st.mix.weights[k] = n / static_cast<double>(M);
            Vector m = (resp.col(k).transpose() * pts).transpose() / n;
            Matrix cen = pts.rowwise() - m.transpose();
            Matrix cov = cen.transpose() *
                         (cen.array().colwise() * resp.col(k).array()).matrix() / n;
            st.mix.means[k] = m;
            floored_chol(cov, floor, st.mix.chols[k], st.mix.logdets[k]);
        }
        st.mix.weights /= st.mix.weights.sum();
    }
    return st;
}

}  // namespace

GaussianMixture GaussianMixture::standard_normal(Eigen::Index d) {
    GaussianMixture mix;
    mix.weights = Vector::Ones(1);
    mix.means = {Vector::Zero(d)};
    mix.chols = {Matrix::Identity(d, d)};
    mix.logdets = {0.0};
    return mix;
}

EmResult fit_gmm(const ParticleCloud& cloud, int K, const EmConfig& config, Rng& rng) {
    const auto M = cloud.size();
    const auto d = cloud.dim();
    require(K >= 1, "K must be >= 1");
    require(M >= static_cast<Eigen::Index>(K) * (d + 1), "too few particles for K components");
    require(cloud.points.allFinite(), "non-finite particles");

    double var_scale = 0.0;
    {
        Vector gm = cloud.points.colwise().mean();
        Matrix cen = cloud.points.rowwise() - gm.transpose();
        var_scale = cen.array().square().sum() / static_cast<double>(M * d);
    }
    double floor = config.floor_factor * std::max(var_scale, 1e-300);

    FitState best;
    for (int r = 0; r < std::max(config.restarts, 1); ++r) {
        FitState st = run_em_once(cloud.points, K, config, floor, rng);
        if (st.final_ll > best.final_ll) best = std::move(st);
    }
    return {std::move(best.mix), std::move(best.trace)};
}

double log_density(const GaussianMixture& mix, const Vector& x) {
    require(x.size() == mix.dim(), "dimension mismatch");
    return log_sum_exp(component_log_terms(mix, x));
}

Vector grad_log_density(const GaussianMixture& mix, const Vector& x) {
    require(x.size() == mix.dim(), "dimension mismatch");
    const int K = mix.components();
    Vector terms = component_log_terms(mix, x);
    double lse = log_sum_exp(terms);
    Vector grad = Vector::Zero(x.size());
    for (int k = 0; k < K; ++k) {
        double r = std::exp(terms[k] - lse);
        if (r <= 0.0) continue;
        // Sigma_k^{-1} (m_k - x) via two triangular solves
        Vector z = mix.chols[k].triangularView<Eigen::Lower>().solve(mix.means[k] - x);
        Vector s = mix.chols[k].transpose().triangularView<Eigen::Upper>().solve(z);
        grad += r * s;
    }
    return grad;
}

Vector log_density_cloud(const GaussianMixture& mix, const Matrix& pts) {
    require(pts.cols() == mix.dim(), "dimension mismatch");
    return colwise_log_sum_exp(cloud_log_terms(mix, pts, nullptr));
}

Matrix grad_log_density_cloud(const GaussianMixture& mix, const Matrix& pts) {
    require(pts.cols() == mix.dim(), "dimension mismatch");
    const int K = mix.components();
    std::vector<Matrix> whitened;
    Matrix terms = cloud_log_terms(mix, pts, &whitened);
    Vector lse = colwise_log_sum_exp(terms);
    Matrix grad = Matrix::Zero(pts.cols(), pts.rows());
    for (int k = 0; k < K; ++k) {
        // Sigma_k^{-1} (m_k - x) = -L_k^{-T} L_k^{-1} (x - m_k)
        Matrix s = whitened[static_cast<std::size_t>(k)];
        mix.chols[static_cast<std::size_t>(k)]
            .transpose()
            .triangularView<Eigen::Upper>()
            .solveInPlace(s);
        Eigen::RowVectorXd r = (terms.row(k) - lse.transpose()).array().exp();
        grad.noalias() -= s * r.asDiagonal();
    }
    return grad.transpose();
}

double mean_log_density(const GaussianMixture& mix, const ParticleCloud& cloud) {
    require(cloud.size() > 0, "empty cloud");
    return log_density_cloud(mix, cloud.points).mean();
}

}  // namespace bslwg
