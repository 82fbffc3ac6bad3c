#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bslwg/common.hpp"

namespace bslwg {

/// Type-7 quantile (linear interpolation of order statistics) of a sorted
/// sample. This is the convention frozen for all octile/quantile summaries.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    require(!sorted.empty(), "quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    double h = p * (static_cast<double>(sorted.size()) - 1.0);
    auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> sample, double p) {
    std::sort(sample.begin(), sample.end());
    return quantile_sorted(sample, p);
}

struct MardiaStats {
    double skewness;        // b_{1,d}
    double kurtosis;        // b_{2,d}
    double kurtosis_excess; // b_{2,d} - d(d+2)
};

/// Mardia multivariate skewness/kurtosis of a particle cloud. O(M^2 d).
inline MardiaStats mardia(const Matrix& points) {
    const auto n = points.rows();
    const auto d = points.cols();
    require(n > static_cast<Eigen::Index>(d), "mardia: too few points");
    Vector mean = points.colwise().mean();
    Matrix centered = points.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(n);
    Eigen::LDLT<Matrix> ldlt(cov);
    Matrix w = ldlt.solve(centered.transpose());  // d x n, cov^{-1} (x_i - mean)
    Matrix g = centered * w;                      // n x n Gram matrix
    double b1 = g.array().cube().sum() / (static_cast<double>(n) * static_cast<double>(n));
    double b2 = g.diagonal().array().square().sum() / static_cast<double>(n);
    double dd = static_cast<double>(d);
    return {b1, b2, b2 - dd * (dd + 2.0)};
}

}  // namespace bslwg
