#pragma once

#include "possiv/error.hpp"
#include "possiv/linalg.hpp"
#include "possiv/reduced_form.hpp"

#include <cmath>

namespace possiv {

/// Structural parameters (alpha, beta, Sigma).
struct StructuralPoint {
    Vector alpha;
    double beta = 0.0;
    Matrix2 sigma = Matrix2::Identity();
};

/// R(beta) = [[1, beta], [0, 1]], mapping structural to reduced-form covariance.
struct RotationR {
    double beta = 0.0;

    explicit RotationR(double b) : beta(b) {}

    Matrix2 matrix() const {
        Matrix2 r;
        r << 1.0, beta, 0.0, 1.0;
        return r;
    }
    Matrix2 inverse() const {
        Matrix2 r;
        r << 1.0, -beta, 0.0, 1.0;
        return r;
    }
    static constexpr double determinant() { return 1.0; }

    /// R sigma R^T.
    Matrix2 apply(const Matrix2& sigma) const {
        const Matrix2 r = matrix();
        return r * sigma * r.transpose();
    }
};

/// Sigma_hat(beta) = R(beta)^{-1} psi_hat R(beta)^{-T}, written out entrywise.
inline Matrix2 sigma_hat_of_beta(const ReducedFormFit& fit, double beta) {
    const Matrix2& psi = fit.psi_hat;
    Matrix2 s;
    s(0, 0) = psi(0, 0) - 2.0 * beta * psi(0, 1) + beta * beta * psi(1, 1);
    s(0, 1) = s(1, 0) = psi(0, 1) - beta * psi(1, 1);
    s(1, 1) = psi(1, 1);
    return s;
}

namespace detail {

inline void require_sigma11(double sigma11, double scale) {
    if (!(sigma11 > 0.0) || sigma11 <= 1e-12 * scale)
        throw DegeneracyError("structural outcome variance sigma11 is not positive");
}

} // namespace detail

/// Likelihood-maximising reduced-form coefficients subject to
/// Gamma [1; -beta] = alpha with covariance R(beta) Sigma R(beta)^T.
inline Matrix gamma_star(const ReducedFormFit& fit, const StructuralPoint& point) {
    const RotationR rot(point.beta);
    const Matrix2 psi = rot.apply(point.sigma);
    const double sigma11 = contrast_quadratic(psi, point.beta);
    detail::require_sigma11(sigma11, psi.trace());

    const Vector residual = point.alpha - t_of_beta(fit, point.beta);
    // [1 0] Sigma R(beta)^T
    const Eigen::RowVector2d loading = point.sigma.row(0) * rot.matrix().transpose();
    return fit.gamma_hat + residual * loading / sigma11;
}

/// Log structural posterior possibility, normalised so the unrestricted MLE
/// scores zero. Uses W^T M_Z W = n psi_hat.
inline double log_structural_possibility(const ReducedFormFit& fit, const StructuralPoint& point) {
    const RotationR rot(point.beta);
    const Matrix2 psi = rot.apply(point.sigma);
    const double sigma11 = contrast_quadratic(psi, point.beta);
    detail::require_sigma11(sigma11, psi.trace());

    Eigen::LLT<Matrix2> llt(psi);
    if (llt.info() != Eigen::Success || !(psi.determinant() > 0.0))
        throw DegeneracyError("R(beta) Sigma R(beta)^T is not positive definite");
    const double det_hat = fit.psi_hat.determinant();
    if (!(det_hat > 0.0)) throw DegeneracyError("psi_hat is singular");

    const double n = static_cast<double>(fit.n);
    const Vector d = point.alpha - t_of_beta(fit, point.beta);
    const Matrix2 wmw = n * fit.psi_hat;

    const double full = -0.5 * n * std::log(psi.determinant()) - 0.5 * llt.solve(wmw).trace() -
                        0.5 * d.dot(fit.gram * d) / sigma11;
    const double at_mle = -0.5 * n * std::log(det_hat) - n;
    return full - at_mle;
}

/// Profile form with Sigma = Sigma_hat(beta), where the covariance terms
/// cancel against the normaliser:
/// -1/2 (alpha - t)^T gram (alpha - t) / sigma11_hat(beta).
inline double profile_log_possibility(const ReducedFormFit& fit, const Vector& alpha, double beta) {
    const double s11 = sigma11_hat(fit, beta);
    const Vector d = alpha - t_of_beta(fit, beta);
    return -0.5 * d.dot(fit.gram * d) / s11;
}

} // namespace possiv
