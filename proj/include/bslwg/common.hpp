#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace bslwg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// A d-dimensional summary statistic vector.
using SummaryVector = Vector;

/// M particles in d dimensions, one particle per row.
struct ParticleCloud {
    Matrix points;  // M x d

    ParticleCloud() = default;
    explicit ParticleCloud(Matrix p) : points(std::move(p)) {}

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

}  // namespace bslwg
