#pragma once

#include "possiv/error.hpp"
#include "possiv/linalg.hpp"
#include "possiv/posterior.hpp"
#include "possiv/reduced_form.hpp"
#include "possiv/rng.hpp"
#include "possiv/structural.hpp"
#include "possiv/violation.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <variant>
#include <vector>

namespace possiv {

/// CDF of a chi-square variable with one degree of freedom, P(1/2, x/2).
inline double chi2_1_cdf(double x) {
    if (!(x > 0.0)) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::gamma_p(0.5, 0.5 * x);
}

/// 1 - F_1(-2 log possibility), computed through the upper incomplete gamma
/// function so small tail values keep their relative accuracy.
inline double chi2_validified(double log_possibility) {
    if (log_possibility >= 0.0) return 1.0;
    if (std::isinf(log_possibility)) return 0.0;
    return boost::math::gamma_q(0.5, -log_possibility);
}

struct Chi2 {};
struct MonteCarlo {
    int m = 1000;
    std::uint64_t seed = 0;
};
using ValidifyMethod = std::variant<Chi2, MonteCarlo>;

/// Validified posterior possibility aligned with the base curve's grid.
struct ValidifiedCurve {
    PossibilityCurve base;
    std::vector<double> validified;
    ValidifyMethod method;
    int degenerate_replicates = 0;

    bool is_chi2() const { return std::holds_alternative<Chi2>(method); }
};

/// Chi-square curves are evaluated exactly off-grid; Monte Carlo curves are
/// interpolated linearly between grid points.
inline CurveView view(const ValidifiedCurve& c) {
    CurveView v{c.base.grid.points, c.validified, {}, c.base.grid.scale, c.base.flags.unbounded_below,
                c.base.flags.unbounded_above};
    if (c.is_chi2()) v.at = [&c](double b) { return chi2_validified(c.base.log_possibility_at(b)); };
    return v;
}

inline LevelSet level_set(const ValidifiedCurve& c, double delta) { return level_set(view(c), delta); }

inline HypothesisBounds hypothesis_bounds(const ValidifiedCurve& c, double threshold, Direction direction) {
    return hypothesis_bounds(view(c), threshold, direction);
}

inline ValidifiedCurve validify_chi2(const PossibilityCurve& curve) {
    ValidifiedCurve v{curve, {}, Chi2{}, 0};
    v.validified.resize(curve.possibility.size());
    for (std::size_t i = 0; i < curve.possibility.size(); ++i)
        v.validified[i] = chi2_validified(std::min(0.0, curve.log_unnormalised[i] - curve.normaliser));
    return v;
}

/// Synthetic-data model under a hypothesised beta: rows of W are independent
/// N(Z_i Gamma_sim, psi_hat) with Gamma_sim the constrained MLE at
/// (alpha_hat(beta), beta, Sigma_hat(beta)).
struct SyntheticModel {
    Matrix gamma_sim;  // p x 2
    Matrix mean;       // n x 2
    Matrix2 factor;    // factor * factor^T = floored psi_hat
};

inline SyntheticModel synthetic_model(const ReducedFormFit& fit, const ViolationSet& set, double beta,
                                      const Matrix& z) {
    if (z.cols() != fit.p()) throw DataError("instrument matrix does not match the fit");
    SyntheticModel m;
    const auto proj = project(set, t_of_beta(fit, beta), fit.gram);
    m.gamma_sim = gamma_star(fit, StructuralPoint{proj.alpha_hat, beta, sigma_hat_of_beta(fit, beta)});
    m.mean = z * m.gamma_sim;

    const double tr = fit.psi_hat.trace();
    if (!std::isfinite(tr) || tr < 0.0) throw DegeneracyError("psi_hat is not a covariance matrix");
    Eigen::SelfAdjointEigenSolver<Matrix2> eig(fit.psi_hat);
    const Vector2 d = eig.eigenvalues().cwiseMax(1e-12 * tr);
    const Matrix2 floored = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
    if (tr > 0.0) {
        Eigen::LLT<Matrix2> llt(floored);
        if (llt.info() != Eigen::Success) throw DegeneracyError("psi_hat Cholesky failed after flooring");
        m.factor = llt.matrixL();
    } else {
        m.factor.setZero();
    }
    return m;
}

template <class Rng>
Matrix draw_synthetic(const SyntheticModel& model, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = model.mean.rows();
    Matrix w(n, 2);
    const double l00 = model.factor(0, 0), l10 = model.factor(1, 0), l11 = model.factor(1, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double e0 = normal(rng);
        const double e1 = normal(rng);
        w(i, 0) = model.mean(i, 0) + l00 * e0;
        w(i, 1) = model.mean(i, 1) + l10 * e0 + l11 * e1;
    }
    return w;
}

/// One draw of W from P_beta with nuisance parameters plugged in from the
/// observed fit.
template <class Rng>
Matrix simulate_under_beta(const ReducedFormFit& fit, const ViolationSet& set, double beta, const Matrix& z,
                           Rng& rng) {
    return draw_synthetic(synthetic_model(fit, set, beta, z), rng);
}

namespace detail {

/// Q(beta) = -2 x unnormalised conditional log possibility.
inline double q_value(const ReducedFormFit& fit, const ViolationSet& set, double beta) {
    return -2.0 * conditional_log_possibility(fit, set, beta);
}

/// Decides f(beta | A, W_i) <= f(beta | A, w) for one synthetic fit, where
/// observed_gap = Q_obs(beta) - min Q_obs. Equivalent to
/// Q_i(beta) - min Q_i >= observed_gap; the minimum is only located when
/// cheaper bounds do not settle the comparison.
inline bool synthetic_at_most_observed(const ReducedFormFit& fit_i, const ViolationSet& set, double beta,
                                       double observed_gap, const std::vector<double>& search) {
    if (observed_gap <= 0.0) return true;
    const double q_beta = q_value(fit_i, set, beta);
    if (q_beta < observed_gap) return false;
    if (identification_region(fit_i, set)) return true;  // min Q_i = 0
    const double target = q_beta - observed_gap;          // need min Q_i <= target

    std::vector<double> pts = search;
    pts.push_back(beta);
    try {
        pts.push_back(tsls_estimate(fit_i));
    } catch (const DegeneracyError&) {
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    std::size_t best = 0;
    double best_q = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const double q = q_value(fit_i, set, pts[k]);
        if (q <= target) return true;
        if (q < best_q) {
            best_q = q;
            best = k;
        }
    }
    const double a = pts[best == 0 ? 0 : best - 1];
    const double b = pts[std::min(best + 1, pts.size() - 1)];
    auto neg_q = [&](double x) { return -q_value(fit_i, set, x); };
    const double x = golden_section_max(neg_q, a, b, 1e-10 * std::max(1.0, std::abs(pts[best])));
    return std::min(best_q, q_value(fit_i, set, x)) <= target;
}

} // namespace detail

/// Monte Carlo validification engine for one observed curve. Replicate i at
/// grid index j draws from the substream keyed by (seed, j, i), so every
/// value is independent of evaluation order.
class McValidifier {
public:
    McValidifier(const PossibilityCurve& curve, const Matrix& z, int m, std::uint64_t seed,
                 std::size_t search_points = 64)
        : curve_(curve), fitter_(z), m_(m), seed_(seed) {
        if (m < 1) throw ConfigError("Monte Carlo sample size must be at least 1");
        if (z.rows() != curve.fit.n || z.cols() != curve.fit.p())
            throw DataError("instrument matrix does not match the fitted data");
        const auto& pts = curve.grid.points;
        const std::size_t stride = std::max<std::size_t>(1, pts.size() / search_points);
        for (std::size_t k = 0; k < pts.size(); k += stride) search_.push_back(pts[k]);
        if (search_.back() != pts.back()) search_.push_back(pts.back());
    }

    struct Value {
        double value = 1.0;
        int degenerate = 0;
    };

    /// Validified value at grid index j.
    Value at_index(std::size_t j) const {
        return at(curve_.grid.points[j], std::min(0.0, curve_.log_unnormalised[j] - curve_.normaliser), j);
    }

    /// Validified value at an arbitrary beta, drawing from stream `stream`.
    Value at_beta(double beta, std::uint64_t stream) const {
        return at(beta, curve_.log_possibility_at(beta), stream);
    }

    int samples() const { return m_; }
    const PossibilityCurve& curve() const { return curve_; }

private:
    Value at(double beta, double observed_log_possibility, std::uint64_t stream) const {
        Value v;
        if (observed_log_possibility >= 0.0) return v;  // every synthetic value is <= 1
        const double gap = -2.0 * observed_log_possibility;
        const SyntheticModel model = synthetic_model(curve_.fit, curve_.set, beta, fitter_.z());
        int count = 0;
        for (int i = 0; i < m_; ++i) {
            StreamRng rng(seed_, {stream, static_cast<std::uint64_t>(i)});
            const Matrix w = draw_synthetic(model, rng);
            try {
                const ReducedFormFit fit_i = fitter_.fit(w);
                if (detail::synthetic_at_most_observed(fit_i, curve_.set, beta, gap, search_)) ++count;
            } catch (const DegeneracyError&) {
                ++count;
                ++v.degenerate;
            } catch (const NumericalError&) {
                ++count;
                ++v.degenerate;
            }
        }
        v.value = static_cast<double>(count) / static_cast<double>(m_);
        return v;
    }

    const PossibilityCurve& curve_;
    ReducedFormFitter fitter_;
    int m_;
    std::uint64_t seed_;
    std::vector<double> search_;
};

/// Monte Carlo validification on every grid point of the curve.
inline ValidifiedCurve validify_mc(const PossibilityCurve& curve, const Matrix& z, int m, std::uint64_t seed) {
    ValidifiedCurve v{curve, {}, MonteCarlo{m, seed}, 0};
    const McValidifier engine(v.base, z, m, seed);
    v.validified.resize(curve.grid.size());
    for (std::size_t j = 0; j < curve.grid.size(); ++j) {
        const auto r = engine.at_index(j);
        v.validified[j] = r.value;
        v.degenerate_replicates += r.degenerate;
    }
    return v;
}

inline ValidifiedCurve validify(const PossibilityCurve& curve, const Matrix& z, const ValidifyMethod& method) {
    if (const auto* mc = std::get_if<MonteCarlo>(&method)) return validify_mc(curve, z, mc->m, mc->seed);
    return validify_chi2(curve);
}

/// Level set of the Monte Carlo validified curve found by bisection over
/// grid indices on each side of the mode, evaluating only O(log grid) points.
/// Agrees with level_set(validify_mc(...)) whenever the validified values are
/// monotone on each side of the mode; values at evaluated indices are
/// bit-identical to the full computation.
struct McLevelSetResult {
    LevelSet level;
    int evaluations = 0;
    int degenerate_replicates = 0;
};

inline McLevelSetResult mc_level_set(const McValidifier& engine, double delta) {
    const PossibilityCurve& c = engine.curve();
    const std::size_t n = c.grid.size();
    std::map<std::size_t, double> memo;
    McLevelSetResult out;
    auto value = [&](std::size_t j) {
        if (auto it = memo.find(j); it != memo.end()) return it->second;
        const auto r = engine.at_index(j);
        ++out.evaluations;
        out.degenerate_replicates += r.degenerate;
        memo.emplace(j, r.value);
        return r.value;
    };

    std::size_t mode = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (c.possibility[j] > c.possibility[mode]) mode = j;
    // indices with possibility exactly one validify to one
    std::size_t left = mode, right = mode;
    while (left > 0 && c.possibility[left - 1] >= 1.0) --left;
    while (right + 1 < n && c.possibility[right + 1] >= 1.0) ++right;

    auto interp = [&](std::size_t out_idx, std::size_t in_idx) {
        const double f_out = value(out_idx), f_in = value(in_idx);
        const double x_out = c.grid.points[out_idx], x_in = c.grid.points[in_idx];
        if (f_in == f_out) return x_in;
        return x_out + (delta - f_out) / (f_in - f_out) * (x_in - x_out);
    };

    LevelSet& ls = out.level;
    if (value(0) >= delta) {
        ls.interval.lo = c.grid.front();
        ls.unbounded_below = true;
    } else {
        std::size_t lo = 0, hi = left;  // value(lo) < delta <= value(hi)
        if (value(hi) < delta) throw NumericalError("validified curve below level at its mode");
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            (value(mid) >= delta ? hi : lo) = mid;
        }
        ls.interval.lo = interp(lo, hi);
    }
    if (value(n - 1) >= delta) {
        ls.interval.hi = c.grid.back();
        ls.unbounded_above = true;
    } else {
        std::size_t lo = right, hi = n - 1;  // value(lo) >= delta > value(hi)
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            (value(mid) >= delta ? lo : hi) = mid;
        }
        ls.interval.hi = interp(hi, lo);
    }
    return out;
}

} // namespace possiv
