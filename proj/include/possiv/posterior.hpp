#pragma once

#include "possiv/error.hpp"
#include "possiv/linalg.hpp"
#include "possiv/reduced_form.hpp"
#include "possiv/violation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace possiv {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return lo <= v && v <= hi; }
    double width() const { return hi - lo; }
};

/// Unnormalised conditional log possibility of beta given alpha in A:
/// -1/2 |Proj_A(t(beta)) - t(beta)|^2_gram / sigma11_hat(beta).
inline double conditional_log_possibility(const ReducedFormFit& fit, const ViolationSet& set, double beta) {
    if (set.is_unconstrained()) return 0.0;
    const double s11 = sigma11_hat(fit, beta);
    const auto proj = project(set, t_of_beta(fit, beta), fit.gram);
    return -0.5 * proj.sq_distance / s11;
}

/// Partial identification region {beta : t(beta) in A}, if nonempty.
/// Bounds may be infinite.
inline std::optional<Interval> identification_region(const ReducedFormFit& fit, const ViolationSet& set) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Vector g1 = fit.gamma1();
    const Vector g2 = fit.gamma2();
    return std::visit(
        [&](const auto& s) -> std::optional<Interval> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ViolationSet::Unconstrained>) {
                return Interval{-inf, inf};
            } else if constexpr (std::is_same_v<T, ViolationSet::Singleton>) {
                const Vector d = g1 - s.point;
                const double g2sq = g2.squaredNorm();
                if (g2sq == 0.0) {
                    if (d.squaredNorm() == 0.0) return Interval{-inf, inf};
                    return std::nullopt;
                }
                const double b = g2.dot(d) / g2sq;
                const double resid = (d - b * g2).norm();
                if (resid > 1e-12 * (d.norm() + std::abs(b) * std::sqrt(g2sq))) return std::nullopt;
                return Interval{b, b};
            } else if constexpr (std::is_same_v<T, ViolationSet::Box>) {
                Interval r{-inf, inf};
                for (Eigen::Index i = 0; i < g1.size(); ++i) {
                    // lower_i <= g1_i - beta g2_i <= upper_i
                    if (g2(i) == 0.0) {
                        if (g1(i) < s.lower(i) || g1(i) > s.upper(i)) return std::nullopt;
                        continue;
                    }
                    double a = (g1(i) - s.upper(i)) / g2(i);
                    double b = (g1(i) - s.lower(i)) / g2(i);
                    if (a > b) std::swap(a, b);
                    r.lo = std::max(r.lo, a);
                    r.hi = std::min(r.hi, b);
                }
                if (r.lo > r.hi) return std::nullopt;
                return r;
            } else {
                const double a = g2.squaredNorm();
                const double b = g1.dot(g2);
                const double c = g1.squaredNorm() - s.tau * s.tau;
                if (a == 0.0) {
                    if (c <= 0.0) return Interval{-inf, inf};
                    return std::nullopt;
                }
                const double disc = b * b - a * c;
                if (disc < 0.0) return std::nullopt;
                const double root = std::sqrt(disc);
                return Interval{(b - root) / a, (b + root) / a};
            }
        },
        set.variant());
}

/// Golden-section search for the maximiser of f on [a, b].
template <class F>
double golden_section_max(F&& f, double a, double b, double tol) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < 300 && (b - a) > tol; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

struct GridOptions {
    double initial_halfwidth_se = 6.0;
    int points_per_side = 256;
    int max_points_per_side = 2048;
    double floor = 1e-6;
    double expansion_cap_se = 1e6;
    double golden_tol = 1e-10;
};

/// Strictly increasing beta grid built around an anchor. scale is the
/// standard error used to size it.
struct BetaGrid {
    std::vector<double> points;
    double anchor = 0.0;
    double scale = 1.0;

    std::size_t size() const { return points.size(); }
    double front() const { return points.front(); }
    double back() const { return points.back(); }
};

inline BetaGrid make_uniform_grid(double anchor, double halfwidth, int per_side, double scale) {
    BetaGrid g;
    g.anchor = anchor;
    g.scale = scale;
    g.points.reserve(static_cast<std::size_t>(2 * per_side + 1));
    for (int k = -per_side; k <= per_side; ++k)
        g.points.push_back(anchor + halfwidth * static_cast<double>(k) / static_cast<double>(per_side));
    return g;
}

struct CurveFlags {
    bool flat = false;              // A = R^p, curve identically one
    bool unbounded_below = false;   // possibility did not decay below the floor on the left
    bool unbounded_above = false;
    bool expansion_capped = false;  // gave up widening the grid
};

/// Normalised conditional posterior possibility of beta on a grid.
struct PossibilityCurve {
    BetaGrid grid;
    std::vector<double> log_unnormalised;
    std::vector<double> possibility;
    double normaliser = 0.0;       // sup over beta of log_unnormalised
    double normaliser_beta = 0.0;  // where the sup is attained
    CurveFlags flags;
    std::optional<Interval> identified;
    ReducedFormFit fit;
    ViolationSet set;

    /// Normalised log possibility at an arbitrary beta.
    double log_possibility_at(double beta) const {
        return std::min(0.0, conditional_log_possibility(fit, set, beta) - normaliser);
    }
    double possibility_at(double beta) const { return std::exp(log_possibility_at(beta)); }
};

namespace detail {

inline std::vector<double> evaluate_log(const ReducedFormFit& fit, const ViolationSet& set,
                                        const std::vector<double>& points) {
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = conditional_log_possibility(fit, set, points[i]);
    return out;
}

inline void insert_point(BetaGrid& grid, std::vector<double>& values, double beta, double value) {
    auto it = std::lower_bound(grid.points.begin(), grid.points.end(), beta);
    const auto pos = static_cast<std::size_t>(it - grid.points.begin());
    const double tol = 1e-12 * std::max(1.0, std::abs(beta));
    if (it != grid.points.end() && std::abs(*it - beta) <= tol) {
        values[pos] = std::max(values[pos], value);
        return;
    }
    if (pos > 0 && std::abs(grid.points[pos - 1] - beta) <= tol) {
        values[pos - 1] = std::max(values[pos - 1], value);
        return;
    }
    grid.points.insert(it, beta);
    values.insert(values.begin() + static_cast<std::ptrdiff_t>(pos), value);
}

} // namespace detail

/// Evaluates f(beta | alpha in A, W) on an adaptive grid around the TSLS
/// estimate and normalises it to have supremum one.
inline PossibilityCurve build_curve(const ReducedFormFit& fit, const ViolationSet& set,
                                    const GridOptions& opts = {}) {
    set.check_dimension(fit.p());
    PossibilityCurve c;
    c.fit = fit;
    c.set = set;

    double anchor = 0.0;
    double scale = 1.0;
    try {
        anchor = tsls_estimate(fit);
        scale = tsls_standard_error(fit);
    } catch (const DegeneracyError&) {
        if (!set.is_unconstrained()) throw;
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1e-8 * std::max(1.0, std::abs(anchor));

    if (set.is_unconstrained()) {
        c.grid = make_uniform_grid(anchor, opts.initial_halfwidth_se * scale, opts.points_per_side, scale);
        c.log_unnormalised.assign(c.grid.size(), 0.0);
        c.possibility.assign(c.grid.size(), 1.0);
        c.normaliser_beta = anchor;
        c.flags.flat = c.flags.unbounded_below = c.flags.unbounded_above = true;
        c.identified = Interval{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        return c;
    }

    c.identified = identification_region(fit, set);
    const double log_floor = std::log(opts.floor);

    double half = opts.initial_halfwidth_se * scale;
    int per_side = opts.points_per_side;
    for (;;) {
        c.grid = make_uniform_grid(anchor, half, per_side, scale);
        c.log_unnormalised = detail::evaluate_log(fit, set, c.grid.points);
        const double top = c.identified ? 0.0
                                        : *std::max_element(c.log_unnormalised.begin(), c.log_unnormalised.end());
        const bool low_ok = c.log_unnormalised.front() - top < log_floor;
        const bool high_ok = c.log_unnormalised.back() - top < log_floor;
        if (low_ok && high_ok) break;
        if (2.0 * half > opts.expansion_cap_se * scale) {
            c.flags.expansion_capped = true;
            break;
        }
        half *= 2.0;
        per_side = std::min(per_side * 2, std::max(opts.max_points_per_side, opts.points_per_side));
    }

    if (c.identified) {
        // sup is exactly attained inside the identification region
        c.normaliser = 0.0;
        double mode = std::clamp(anchor, c.identified->lo, c.identified->hi);
        if (!std::isfinite(mode)) mode = anchor;
        c.normaliser_beta = mode;
        detail::insert_point(c.grid, c.log_unnormalised, mode, conditional_log_possibility(fit, set, mode));
    } else {
        const auto best = static_cast<std::size_t>(
            std::max_element(c.log_unnormalised.begin(), c.log_unnormalised.end()) - c.log_unnormalised.begin());
        const double a = c.grid.points[best == 0 ? 0 : best - 1];
        const double b = c.grid.points[std::min(best + 1, c.grid.size() - 1)];
        auto f = [&](double beta) { return conditional_log_possibility(fit, set, beta); };
        const double polished = golden_section_max(f, a, b, opts.golden_tol * std::max(1.0, std::abs(c.grid.points[best])));
        const double fp = f(polished);
        if (fp > c.log_unnormalised[best]) {
            c.normaliser = fp;
            c.normaliser_beta = polished;
            detail::insert_point(c.grid, c.log_unnormalised, polished, fp);
        } else {
            c.normaliser = c.log_unnormalised[best];
            c.normaliser_beta = c.grid.points[best];
        }
    }

    c.possibility.resize(c.grid.size());
    for (std::size_t i = 0; i < c.grid.size(); ++i)
        c.possibility[i] = std::exp(std::min(0.0, c.log_unnormalised[i] - c.normaliser));
    c.flags.unbounded_below = !(c.possibility.front() < opts.floor);
    c.flags.unbounded_above = !(c.possibility.back() < opts.floor);
    return c;
}

/// Read-only view of any curve on a grid, with an optional exact evaluator
/// for off-grid points (linear interpolation otherwise).
struct CurveView {
    std::span<const double> beta;
    std::span<const double> value;
    std::function<double(double)> at;
    double scale = 1.0;
    bool unbounded_below = false;
    bool unbounded_above = false;

    double interpolate(double b) const {
        if (b <= beta.front()) return value.front();
        if (b >= beta.back()) return value.back();
        const auto it = std::upper_bound(beta.begin(), beta.end(), b);
        const auto j = static_cast<std::size_t>(it - beta.begin());
        const double w = (b - beta[j - 1]) / (beta[j] - beta[j - 1]);
        return (1.0 - w) * value[j - 1] + w * value[j];
    }
    double evaluate(double b) const { return at ? at(b) : interpolate(b); }
};

inline CurveView view(const PossibilityCurve& c) {
    return CurveView{c.grid.points, c.possibility, [&c](double b) { return c.possibility_at(b); }, c.grid.scale,
                     c.flags.unbounded_below, c.flags.unbounded_above};
}

struct LevelSet {
    Interval interval;
    bool contiguous = true;
    bool unbounded_below = false;  // level set reaches the left end of the grid
    bool unbounded_above = false;

    bool unbounded() const { return unbounded_below || unbounded_above; }
};

namespace detail {

/// Crossing of delta between x_out (value < delta) and x_in (value >= delta).
inline double refine_crossing(const CurveView& v, double x_out, double x_in, double delta, double tol) {
    if (!v.at) {
        const double f_out = v.interpolate(x_out);
        const double f_in = v.interpolate(x_in);
        if (f_in == f_out) return x_in;
        return x_out + (delta - f_out) / (f_in - f_out) * (x_in - x_out);
    }
    for (int it = 0; it < 200 && std::abs(x_in - x_out) > tol; ++it) {
        const double mid = 0.5 * (x_out + x_in);
        if (v.at(mid) >= delta)
            x_in = mid;
        else
            x_out = mid;
    }
    return 0.5 * (x_out + x_in);
}

} // namespace detail

/// Upper delta level set {beta : value >= delta}, as its convex hull on the
/// grid with endpoints refined between adjacent grid points.
inline LevelSet level_set(const CurveView& v, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("level must lie in [0, 1]");
    const std::size_t n = v.beta.size();
    std::size_t first = n, last = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (v.value[i] >= delta) {
            if (first == n) first = i;
            last = i;
        }
    }
    if (first == n) throw NumericalError("level set is empty at delta=" + std::to_string(delta));

    LevelSet ls;
    for (std::size_t i = first; i <= last; ++i)
        if (v.value[i] < delta) ls.contiguous = false;

    const double tol = 1e-8 * v.scale;
    if (first == 0) {
        ls.interval.lo = v.beta.front();
        ls.unbounded_below = true;
    } else {
        ls.interval.lo = detail::refine_crossing(v, v.beta[first - 1], v.beta[first], delta, tol);
    }
    if (last == n - 1) {
        ls.interval.hi = v.beta.back();
        ls.unbounded_above = true;
    } else {
        ls.interval.hi = detail::refine_crossing(v, v.beta[last + 1], v.beta[last], delta, tol);
    }
    return ls;
}

inline LevelSet level_set(const PossibilityCurve& c, double delta) { return level_set(view(c), delta); }

enum class Direction { Greater, Less };

/// Lower and upper probability of the hypothesis beta > c (Greater) or
/// beta < c (Less) induced by a possibility curve.
struct HypothesisBounds {
    double lower = 0.0;
    double upper = 1.0;
    bool conservative = false;  // part of the relevant region lies off the grid
};

inline HypothesisBounds hypothesis_bounds(const CurveView& v, double threshold, Direction direction) {
    double sup_le = 0.0;  // sup over beta <= c
    double sup_gt = 0.0;  // sup over beta > c
    bool any_le = false, any_gt = false;
    for (std::size_t i = 0; i < v.beta.size(); ++i) {
        if (v.beta[i] <= threshold) {
            sup_le = std::max(sup_le, v.value[i]);
            any_le = true;
        } else {
            sup_gt = std::max(sup_gt, v.value[i]);
            any_gt = true;
        }
    }
    HypothesisBounds hb;
    if (threshold >= v.beta.front() && threshold <= v.beta.back()) {
        // the value at c bounds both one-sided suprema (right side as a limit)
        const double at_c = v.evaluate(threshold);
        sup_le = std::max(sup_le, at_c);
        sup_gt = std::max(sup_gt, at_c);
    } else {
        hb.conservative = true;
    }
    // regions beyond the grid inherit the boundary value
    if (!any_le) sup_le = v.value.front();
    if (!any_gt) sup_gt = v.value.back();
    if (v.unbounded_below) {
        sup_le = std::max(sup_le, v.value.front());
        hb.conservative = true;
    }
    if (v.unbounded_above) {
        sup_gt = std::max(sup_gt, v.value.back());
        hb.conservative = true;
    }

    if (direction == Direction::Greater) {
        hb.upper = sup_gt;
        hb.lower = 1.0 - sup_le;
    } else {
        hb.upper = sup_le;
        hb.lower = 1.0 - sup_gt;
    }
    hb.lower = std::clamp(hb.lower, 0.0, 1.0);
    hb.upper = std::clamp(hb.upper, 0.0, 1.0);
    return hb;
}

inline HypothesisBounds hypothesis_bounds(const PossibilityCurve& c, double threshold, Direction direction) {
    return hypothesis_bounds(view(c), threshold, direction);
}

} // namespace possiv
