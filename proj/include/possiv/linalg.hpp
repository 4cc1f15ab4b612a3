#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace possiv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Matrix2 = Eigen::Matrix2d;
using Vector2 = Eigen::Vector2d;

/// Relative singular-value threshold below which a matrix counts as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

inline bool has_full_column_rank(const Matrix& m) {
    if (m.cols() == 0) return true;
    if (m.rows() < m.cols()) return false;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double largest = s(0);
    const double smallest = s(s.size() - 1);
    return largest > 0.0 && smallest >= kRankTolerance * largest;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// [1, -beta] * m * [1, -beta]^T for a 2x2 matrix.
inline double contrast_quadratic(const Matrix2& m, double beta) {
    return m(0, 0) - beta * (m(0, 1) + m(1, 0)) + beta * beta * m(1, 1);
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

} // namespace possiv
