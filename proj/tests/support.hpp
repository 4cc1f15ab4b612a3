#pragma once

// Independent reference computations used as test oracles. Nothing here
// calls into the library's numerical routines.

#include "possiv/possiv.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <sys/wait.h>

namespace oracle {

using possiv::Matrix;
using possiv::Matrix2;
using possiv::Vector;

inline std::mt19937_64& engine(std::uint64_t seed) {
    thread_local std::mt19937_64 eng;
    eng.seed(seed);
    return eng;
}

inline Matrix random_matrix(std::mt19937_64& g, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> nd;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(g);
    return m;
}

inline Matrix random_spd(std::mt19937_64& g, Eigen::Index p, double ridge = 0.1) {
    const Matrix a = random_matrix(g, p, p + 2);
    return a * a.transpose() + ridge * Matrix::Identity(p, p);
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

/// Least-squares coefficients from the normal equations via Gaussian
/// elimination with partial pivoting on (A'A | A'B).
inline Matrix normal_equations_solve(const Matrix& a, const Matrix& b) {
    const Eigen::Index k = a.cols();
    Matrix m(k, k + b.cols());
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            double s = 0.0;
            for (Eigen::Index r = 0; r < a.rows(); ++r) s += a(r, i) * a(r, j);
            m(i, j) = s;
        }
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (Eigen::Index r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
            m(i, k + j) = s;
        }
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index piv = c;
        for (Eigen::Index r = c + 1; r < k; ++r)
            if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
        m.row(c).swap(m.row(piv));
        for (Eigen::Index r = 0; r < k; ++r) {
            if (r == c) continue;
            const double f = m(r, c) / m(c, c);
            m.row(r) -= f * m.row(c);
        }
    }
    Matrix x(k, b.cols());
    for (Eigen::Index i = 0; i < k; ++i) x.row(i) = m.row(i).tail(b.cols()) / m(i, i);
    return x;
}

inline Matrix normal_equations_residuals(const Matrix& a, const Matrix& b) {
    return b - a * normal_equations_solve(a, b);
}

/// Generic quadratic form v' M v by explicit summation.
inline double quad(const Matrix& m, const Vector& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        for (Eigen::Index j = 0; j < v.size(); ++j) s += v(i) * m(i, j) * v(j);
    return s;
}

/// chi-square(1) CDF through the error function.
inline double chi2_1_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(std::sqrt(x / 2.0)); }

inline constexpr double kChi2Quantile95 = 3.841458820694124;

/// Gaussian reduced-form log-likelihood up to the -n/2 log(2 pi) constant.
inline double reduced_form_loglik(const Matrix& w, const Matrix& z, const Matrix& gamma, const Matrix2& psi) {
    const Matrix resid = w - z * gamma;
    const Matrix2 s = resid.transpose() * resid;
    const double n = static_cast<double>(w.rows());
    return -0.5 * n * std::log(psi.determinant()) - 0.5 * (psi.inverse() * s).trace();
}

/// Full structural log-possibility evaluated from raw data, normalised by
/// the likelihood at the unconstrained MLE.
inline double structural_from_data(const Matrix& w, const Matrix& z, const Vector& alpha, double beta,
                                   const Matrix2& sigma) {
    Matrix2 r;
    r << 1.0, beta, 0.0, 1.0;
    const Matrix2 psi = r * sigma * r.transpose();
    const Matrix gram = z.transpose() * z;
    const Matrix ghat = normal_equations_solve(z, w);
    const Matrix resid = w - z * ghat;
    const Matrix2 psi_hat = resid.transpose() * resid / static_cast<double>(w.rows());
    Vector c(2);
    c << 1.0, -beta;
    const Vector t = ghat * c;
    const double s11 = c.dot(psi * c);
    const double n = static_cast<double>(w.rows());
    const double full = -0.5 * n * std::log(psi.determinant()) -
                        0.5 * (psi.inverse() * (n * psi_hat)).trace() - 0.5 * quad(gram, alpha - t) / s11;
    const double mle = -0.5 * n * std::log(psi_hat.determinant()) - n;
    return full - mle;
}

/// Brute-force minimiser of (a - t)' G (a - t) over a box on a regular grid
/// with the given step.
inline double brute_force_box(const Vector& lo, const Vector& hi, const Vector& t, const Matrix& g, double step) {
    const auto p = t.size();
    std::vector<int> counts(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i)
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::ceil((hi(i) - lo(i)) / step)) + 1;
    double best = std::numeric_limits<double>::infinity();
    Vector a(p);
    std::vector<int> idx(static_cast<std::size_t>(p), 0);
    while (true) {
        for (Eigen::Index i = 0; i < p; ++i)
            a(i) = std::min(hi(i), lo(i) + step * idx[static_cast<std::size_t>(i)]);
        best = std::min(best, quad(g, a - t));
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == counts[k]) idx[k++] = 0;
        if (k == idx.size()) break;
    }
    return best;
}

/// Brute-force minimiser over the l2 ball of radius tau, grid points inside.
inline double brute_force_ball(double tau, const Vector& t, const Matrix& g, double step) {
    const Vector lo = Vector::Constant(t.size(), -tau);
    const Vector hi = Vector::Constant(t.size(), tau);
    const auto p = t.size();
    const int count = static_cast<int>(std::ceil(2.0 * tau / step)) + 1;
    double best = std::numeric_limits<double>::infinity();
    Vector a(p);
    std::vector<int> idx(static_cast<std::size_t>(p), 0);
    while (true) {
        for (Eigen::Index i = 0; i < p; ++i) a(i) = std::min(hi(i), lo(i) + step * idx[static_cast<std::size_t>(i)]);
        const double nrm = a.norm();
        if (nrm <= tau) best = std::min(best, quad(g, a - t));
        if (nrm > 0.0) best = std::min(best, quad(g, a * (tau / nrm) - t));  // radial image on the sphere
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == count) idx[k++] = 0;
        if (k == idx.size()) break;
    }
    return best;
}

/// KKT residual for the box QP: gradient must vanish on free coordinates
/// and point outward on active ones.
inline double box_kkt_residual(const Vector& a, const Vector& lo, const Vector& hi, const Vector& t, const Matrix& g) {
    const Vector grad = g * (a - t);
    double r = 0.0;
    const double tol = 1e-12 * (1.0 + t.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const bool at_lo = a(i) <= lo(i) + tol;
        const bool at_hi = a(i) >= hi(i) - tol;
        if (at_lo && at_hi) continue;
        if (at_lo)
            r = std::max(r, std::max(0.0, -grad(i)));
        else if (at_hi)
            r = std::max(r, std::max(0.0, grad(i)));
        else
            r = std::max(r, std::abs(grad(i)));
    }
    return r;
}

/// KKT residual for the l2 ball: G(a - t) + lambda a = 0 with lambda >= 0
/// estimated by least squares, plus feasibility.
inline double ball_kkt_residual(const Vector& a, double tau, const Vector& t, const Matrix& g) {
    const Vector grad = g * (a - t);
    if (a.norm() < tau - 1e-9 * (1.0 + tau)) return grad.cwiseAbs().maxCoeff();
    const double an = a.squaredNorm();
    const double lambda = an > 0.0 ? -grad.dot(a) / an : 0.0;
    const double stationarity = (grad + lambda * a).cwiseAbs().maxCoeff();
    return std::max({stationarity, std::max(0.0, -lambda), std::max(0.0, a.norm() - tau)});
}

/// Random projection problem with a small feasible set and an O(1-10)
/// correlated metric; t usually lies outside the set.
struct ProjectionCase {
    bool ball = false;
    Vector lower, upper;
    double tau = 0.0;
    Vector t;
    Matrix gram;
};

inline ProjectionCase random_projection_case(std::mt19937_64& g, Eigen::Index p, bool ball) {
    ProjectionCase c;
    c.ball = ball;
    c.gram = random_spd(g, p, 0.3) * uniform(g, 0.5, 2.0);
    if (ball) {
        c.tau = uniform(g, 0.05, 0.12);
    } else {
        c.lower.resize(p);
        c.upper.resize(p);
        for (Eigen::Index i = 0; i < p; ++i) {
            const double side = uniform(g, 0.05, 0.2);
            c.lower(i) = uniform(g, -0.1, 0.0);
            c.upper(i) = c.lower(i) + side;
        }
    }
    c.t = random_matrix(g, p, 1).col(0) * 0.2;
    return c;
}

/// Smallest root of det(M1 - q M2) for symmetric M2 PD: the minimum of the
/// Rayleigh quotient c'M1c / c'M2c over c = (1, -beta).
inline double generalized_min_eigenvalue(const Matrix2& m1, const Matrix2& m2) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix2> ges(m1, m2);
    return ges.eigenvalues().minCoeff();
}

/// Scratch directory unique to the test binary.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("possiv_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    os << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes canonical data as y, x, z1..zp columns.
inline void write_dataset_csv(const std::filesystem::path& path, const possiv::CanonicalData& d,
                              const Matrix* covariates = nullptr) {
    std::ofstream os(path);
    os << "y,x";
    for (Eigen::Index j = 0; j < d.p(); ++j) os << ",z" << j + 1;
    if (covariates)
        for (Eigen::Index j = 0; j < covariates->cols(); ++j) os << ",u" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        os << possiv::format_real(d.w(i, 0)) << ',' << possiv::format_real(d.w(i, 1));
        for (Eigen::Index j = 0; j < d.p(); ++j) os << ',' << possiv::format_real(d.z(i, j));
        if (covariates)
            for (Eigen::Index j = 0; j < covariates->cols(); ++j) os << ',' << possiv::format_real((*covariates)(i, j));
        os << '\n';
    }
}

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs the CLI with the given argument string, capturing stdout and stderr.
inline CommandResult run_cli(const std::string& args, const std::string& tag) {
    const auto dir = scratch_dir("cli");
    const auto out = dir / (tag + ".stdout");
    const auto err = dir / (tag + ".stderr");
    const std::string cmd = std::string("\"") + POSSIV_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

} // namespace oracle
