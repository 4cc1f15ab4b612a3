#pragma once

#include "possiv/dataset.hpp"
#include "possiv/error.hpp"
#include "possiv/linalg.hpp"

namespace possiv {

/// Sufficient statistics of the reduced-form regression of W = [Y X] on Z.
struct ReducedFormFit {
    Matrix gamma_hat;  // p x 2, columns gamma1_hat, gamma2_hat
    Matrix2 psi_hat;   // 1/n residual cross-product (MLE)
    Matrix gram;       // Z^T Z
    Eigen::Index n = 0;

    Eigen::Index p() const { return gamma_hat.rows(); }
    auto gamma1() const { return gamma_hat.col(0); }
    auto gamma2() const { return gamma_hat.col(1); }
};

/// Refits the reduced form for many W against one fixed Z. The least-squares
/// map (Z^T Z)^{-1} Z^T is built once from a Householder QR of Z.
class ReducedFormFitter {
public:
    explicit ReducedFormFitter(const Matrix& z) : z_(z), gram_(z.transpose() * z) {
        const auto n = z.rows();
        const auto p = z.cols();
        if (n <= p) throw DataError("need more observations than instruments");
        Eigen::HouseholderQR<Matrix> qr(z);
        Matrix r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
        const Eigen::VectorXd rdiag = r.diagonal().cwiseAbs();
        if (rdiag.minCoeff() <= kRankTolerance * rdiag.maxCoeff())
            throw NumericalError("instrument matrix is numerically singular");
        Matrix q_thin = qr.householderQ() * Matrix::Identity(n, p);
        solve_map_ = r.triangularView<Eigen::Upper>().solve(q_thin.transpose());
    }

    const Matrix& z() const { return z_; }
    const Matrix& gram() const { return gram_; }

    ReducedFormFit fit(const Matrix& w) const {
        ReducedFormFit f;
        f.n = w.rows();
        f.gamma_hat.noalias() = solve_map_ * w;
        Matrix resid = w;
        resid.noalias() -= z_ * f.gamma_hat;
        f.psi_hat.noalias() = resid.transpose() * resid;
        f.psi_hat /= static_cast<double>(f.n);
        f.psi_hat(0, 1) = f.psi_hat(1, 0) = 0.5 * (f.psi_hat(0, 1) + f.psi_hat(1, 0));
        f.gram = gram_;
        return f;
    }

private:
    Matrix z_;
    Matrix gram_;
    Matrix solve_map_;  // p x n
};

inline ReducedFormFit fit_reduced_form(const CanonicalData& data) {
    if (data.w.cols() != 2 || data.w.rows() != data.z.rows())
        throw DataError("canonical data has inconsistent shapes");
    return ReducedFormFitter(data.z).fit(data.w);
}

/// t(beta) = gamma1_hat - beta * gamma2_hat.
inline Vector t_of_beta(const ReducedFormFit& fit, double beta) {
    return fit.gamma1() - beta * fit.gamma2();
}

/// Scale-relative floor used to declare sigma11 degenerate.
inline double sigma11_floor(const Matrix2& psi) { return 1e-12 * psi.trace(); }

/// Structural outcome variance [1 -beta] psi_hat [1 -beta]^T under beta.
inline double sigma11_hat(const ReducedFormFit& fit, double beta) {
    const double s = contrast_quadratic(fit.psi_hat, beta);
    if (!(s > 0.0) || s <= sigma11_floor(fit.psi_hat))
        throw DegeneracyError("sigma11_hat(beta) is not positive at beta=" + std::to_string(beta));
    return s;
}

/// Just-identified / over-identified TSLS point estimate from the reduced form.
inline double tsls_estimate(const ReducedFormFit& fit) {
    const Vector g2 = fit.gram * fit.gamma2();
    const double denom = fit.gamma2().dot(g2);
    if (!(denom > 0.0)) throw DegeneracyError("first stage is zero");
    return g2.dot(fit.gamma1()) / denom;
}

/// Homoskedastic TSLS standard error with 1/n residual normalisation.
/// W^T W is recovered as n psi_hat + gamma_hat^T gram gamma_hat.
inline double tsls_standard_error(const ReducedFormFit& fit) {
    const double beta = tsls_estimate(fit);
    const double denom = fit.gamma2().dot(fit.gram * fit.gamma2());
    const Matrix2 wtw = static_cast<double>(fit.n) * fit.psi_hat +
                        Matrix2(fit.gamma_hat.transpose() * fit.gram * fit.gamma_hat);
    const double sigma2 = std::max(0.0, contrast_quadratic(wtw, beta)) / static_cast<double>(fit.n);
    return std::sqrt(sigma2 / denom);
}

} // namespace possiv
