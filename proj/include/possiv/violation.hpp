#pragma once

#include "possiv/error.hpp"
#include "possiv/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace possiv {

/// The set A of tolerated direct effects alpha. Every variant is a nonempty
/// closed convex subset of R^p.
class ViolationSet {
public:
    struct Unconstrained {};
    struct Singleton {
        Vector point;
    };
    struct Box {
        Vector lower;
        Vector upper;
    };
    struct L2Ball {
        double tau = 0.0;
    };
    using Variant = std::variant<Unconstrained, Singleton, Box, L2Ball>;

    ViolationSet() : v_(Unconstrained{}) {}

    static ViolationSet unconstrained() { return ViolationSet(Unconstrained{}); }
    static ViolationSet singleton(Vector point) {
        if (!point.allFinite()) throw ConfigError("singleton point must be finite");
        return ViolationSet(Singleton{std::move(point)});
    }
    static ViolationSet box(Vector lower, Vector upper) {
        if (lower.size() != upper.size()) throw ConfigError("box bounds have different lengths");
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            if (std::isnan(lower(i)) || std::isnan(upper(i)))
                throw ConfigError("box bounds must not be NaN");
            if (lower(i) > upper(i))
                throw ConfigError("box lower bound exceeds upper bound in coordinate " + std::to_string(i + 1));
        }
        return ViolationSet(Box{std::move(lower), std::move(upper)});
    }
    static ViolationSet symmetric_box(Eigen::Index p, double halfwidth) {
        return box(Vector::Constant(p, -halfwidth), Vector::Constant(p, halfwidth));
    }
    static ViolationSet l2_ball(double tau) {
        if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("l2 radius must be finite and nonnegative");
        return ViolationSet(L2Ball{tau});
    }

    const Variant& variant() const { return v_; }
    bool is_unconstrained() const { return std::holds_alternative<Unconstrained>(v_); }

    /// Dimension the set is tied to, if any (balls and R^p fit any p).
    std::optional<Eigen::Index> dimension() const {
        if (auto s = std::get_if<Singleton>(&v_)) return s->point.size();
        if (auto b = std::get_if<Box>(&v_)) return b->lower.size();
        return std::nullopt;
    }

    void check_dimension(Eigen::Index p) const {
        if (auto d = dimension(); d && *d != p)
            throw ConfigError("violation set has dimension " + std::to_string(*d) + " but there are " +
                              std::to_string(p) + " instruments");
    }

    bool contains(const Vector& alpha, double slack = 0.0) const {
        return std::visit(
            [&](const auto& s) -> bool {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, Unconstrained>) {
                    return true;
                } else if constexpr (std::is_same_v<T, Singleton>) {
                    return (alpha - s.point).cwiseAbs().maxCoeff() <= slack;
                } else if constexpr (std::is_same_v<T, Box>) {
                    return ((alpha - s.lower).array() >= -slack).all() &&
                           ((s.upper - alpha).array() >= -slack).all();
                } else {
                    return alpha.norm() <= s.tau + slack;
                }
            },
            v_);
    }

    /// Human-readable label, e.g. "{0}", "[-0.5, 0.5]", "[-0.1, 0.1]^5", "||a|| <= 0.3".
    std::string label() const;

private:
    explicit ViolationSet(Variant v) : v_(std::move(v)) {}
    Variant v_;
};

namespace detail {

inline std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// Interval bounds always carry a decimal point, e.g. "0.0".
inline std::string format_bound(double v) {
    std::string s = format_number(v);
    if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

inline bool all_equal(const Vector& v) {
    return v.size() == 0 || (v.array() == v(0)).all();
}

} // namespace detail

inline std::string ViolationSet::label() const {
    using detail::format_number;
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Unconstrained>) {
                return "R^p";
            } else if constexpr (std::is_same_v<T, Singleton>) {
                if (detail::all_equal(s.point)) return "{" + format_number(s.point(0)) + "}";
                std::string out = "{(";
                for (Eigen::Index i = 0; i < s.point.size(); ++i)
                    out += (i ? ", " : "") + format_number(s.point(i));
                return out + ")}";
            } else if constexpr (std::is_same_v<T, Box>) {
                if (detail::all_equal(s.lower) && detail::all_equal(s.upper)) {
                    std::string out = "[" + detail::format_bound(s.lower(0)) + ", " + detail::format_bound(s.upper(0)) + "]";
                    if (s.lower.size() > 1) out += "^" + std::to_string(s.lower.size());
                    return out;
                }
                std::string out;
                for (Eigen::Index i = 0; i < s.lower.size(); ++i)
                    out += (i ? " x " : "") + std::string("[") + detail::format_bound(s.lower(i)) + ", " +
                           detail::format_bound(s.upper(i)) + "]";
                return out;
            } else {
                return "||a|| <= " + format_number(s.tau);
            }
        },
        v_);
}

/// Outcome of projecting t onto A in the gram metric.
struct ProjectionResult {
    Vector alpha_hat;
    double sq_distance = 0.0;   // (alpha_hat - t)^T gram (alpha_hat - t)
    bool interior = true;       // t was already in A
    std::vector<int> active;    // Box only: -1 lower bound active, +1 upper, 0 free
    double lambda = 0.0;        // L2Ball only: Lagrange multiplier (infinity for tau = 0)
    int iterations = 0;
};

namespace detail {

inline double metric_sq(const Vector& d, const Matrix& gram) { return d.dot(gram * d); }

inline bool is_diagonal(const Matrix& gram) {
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
        for (Eigen::Index j = 0; j < gram.cols(); ++j)
            if (i != j && std::abs(gram(i, j)) > 1e-12 * std::sqrt(std::abs(gram(i, i) * gram(j, j))))
                return false;
    return true;
}

} // namespace detail

/// Box-constrained QP min (a - t)^T G (a - t) s.t. lower <= a <= upper.
/// Diagonal G clips component-wise; otherwise cyclic coordinate descent with
/// exact clipped one-dimensional updates.
inline ProjectionResult project_box(const Vector& lower, const Vector& upper, const Vector& t,
                                    const Matrix& gram) {
    const auto p = t.size();
    ProjectionResult r;
    r.alpha_hat = t.cwiseMax(lower).cwiseMin(upper);
    r.active.assign(static_cast<std::size_t>(p), 0);

    if ((r.alpha_hat.array() == t.array()).all()) {
        r.sq_distance = 0.0;
        r.interior = true;
        return r;
    }
    r.interior = false;

    if (!detail::is_diagonal(gram)) {
        const double tol = 1e-12 * (1.0 + t.cwiseAbs().maxCoeff());
        constexpr int kMaxSweeps = 10000;
        Vector& a = r.alpha_hat;
        double max_change = 0.0;
        int sweep = 0;
        for (; sweep < kMaxSweeps; ++sweep) {
            max_change = 0.0;
            for (Eigen::Index i = 0; i < p; ++i) {
                // exact minimiser along coordinate i, then clip
                const double g = gram.row(i).dot(a - t);
                const double next = std::clamp(a(i) - g / gram(i, i), lower(i), upper(i));
                max_change = std::max(max_change, std::abs(next - a(i)));
                a(i) = next;
            }
            if (max_change <= tol) break;
        }
        r.iterations = sweep + 1;
        if (sweep == kMaxSweeps)
            throw NumericalError("box projection did not converge in 10000 sweeps", max_change);
    }

    for (Eigen::Index i = 0; i < p; ++i) {
        if (r.alpha_hat(i) <= lower(i) && t(i) != r.alpha_hat(i)) r.active[static_cast<std::size_t>(i)] = -1;
        if (r.alpha_hat(i) >= upper(i) && t(i) != r.alpha_hat(i)) r.active[static_cast<std::size_t>(i)] = 1;
    }
    r.sq_distance = detail::metric_sq(r.alpha_hat - t, gram);
    return r;
}

/// Projection onto {a : ||a||_2 <= tau} in the gram metric. Outside the ball
/// the minimiser is the ridge path a(lambda) = (G + lambda I)^{-1} G t with
/// ||a(lambda)||_2 = tau, found by bisection on lambda.
inline ProjectionResult project_l2ball(double tau, const Vector& t, const Matrix& gram) {
    if (!(tau >= 0.0)) throw ConfigError("l2 radius must be nonnegative");
    ProjectionResult r;
    if (t.norm() <= tau) {
        r.alpha_hat = t;
        r.interior = true;
        return r;
    }
    r.interior = false;
    if (tau == 0.0) {
        r.alpha_hat = Vector::Zero(t.size());
        r.lambda = std::numeric_limits<double>::infinity();
        r.sq_distance = detail::metric_sq(t, gram);
        return r;
    }

    // a(lambda) = V diag(d / (d + lambda)) V^T t
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector& d = eig.eigenvalues();
    const Vector c = eig.eigenvectors().transpose() * t;
    auto norm_at = [&](double lambda) {
        return (d.array() / (d.array() + lambda) * c.array()).matrix().norm();
    };

    double hi = gram.trace() / static_cast<double>(t.size());
    int doublings = 0;
    while (norm_at(hi) >= tau) {
        hi *= 2.0;
        if (++doublings > 200)
            throw NumericalError("l2 projection: multiplier bracket did not close", norm_at(hi) - tau);
    }
    double lo = 0.0;
    // bisect to machine precision so the solution sits on the sphere
    const double tol = 1e-12 * (1.0 + tau);
    double lambda = hi;
    double resid = norm_at(hi) - tau;
    int it = 0;
    for (; it < 2000; ++it) {
        lambda = 0.5 * (lo + hi);
        resid = norm_at(lambda) - tau;
        if (resid == 0.0) break;
        if (resid > 0.0)
            lo = lambda;
        else
            hi = lambda;
        if (hi - lo <= std::numeric_limits<double>::epsilon() * hi) break;
    }
    if (std::abs(resid) > tol)
        throw NumericalError("l2 projection: bisection did not reach tolerance", resid);
    r.lambda = lambda;
    r.iterations = it + 1;
    r.alpha_hat = eig.eigenvectors() * (d.array() / (d.array() + lambda) * c.array()).matrix();
    r.sq_distance = detail::metric_sq(r.alpha_hat - t, gram);
    return r;
}

/// argmin over a in A of (a - t)^T gram (a - t).
inline ProjectionResult project(const ViolationSet& set, const Vector& t, const Matrix& gram) {
    return std::visit(
        [&](const auto& s) -> ProjectionResult {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ViolationSet::Unconstrained>) {
                ProjectionResult r;
                r.alpha_hat = t;
                return r;
            } else if constexpr (std::is_same_v<T, ViolationSet::Singleton>) {
                ProjectionResult r;
                r.alpha_hat = s.point;
                r.interior = (s.point.array() == t.array()).all();
                r.sq_distance = r.interior ? 0.0 : detail::metric_sq(s.point - t, gram);
                return r;
            } else if constexpr (std::is_same_v<T, ViolationSet::Box>) {
                return project_box(s.lower, s.upper, t, gram);
            } else {
                return project_l2ball(s.tau, t, gram);
            }
        },
        set.variant());
}

namespace detail {

inline std::string_view trim_view(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline double parse_bound(std::string_view s, const std::string& spec) {
    s = trim_view(s);
    const std::string text(s);
    if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("malformed number '" + text + "' in violation spec '" + spec + "'");
    }
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

} // namespace detail

/// Parses the CLI syntax: "none", "singleton:c", "singleton:[c1,...,cp]",
/// "box:l:u", "box:[l1,u1;l2,u2;...]", "l2:tau". Scalar forms broadcast to p.
inline ViolationSet parse_violation(const std::string& spec, Eigen::Index p) {
    using detail::parse_bound;
    const std::string_view s = detail::trim_view(spec);
    const auto colon = s.find(':');
    const std::string kind(s.substr(0, colon));
    const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : s.substr(colon + 1);

    if (kind == "none" || kind == "unconstrained") {
        if (!rest.empty()) throw ConfigError("'none' takes no arguments: '" + spec + "'");
        return ViolationSet::unconstrained();
    }
    if (rest.empty()) throw ConfigError("violation spec '" + spec + "' is missing its arguments");

    auto bracket_body = [&](std::string_view r) -> std::optional<std::string_view> {
        r = detail::trim_view(r);
        if (r.size() >= 2 && r.front() == '[' && r.back() == ']') return r.substr(1, r.size() - 2);
        return std::nullopt;
    };

    if (kind == "singleton") {
        if (auto body = bracket_body(rest)) {
            const auto parts = detail::split(*body, ',');
            if (static_cast<Eigen::Index>(parts.size()) != p)
                throw ConfigError("singleton in '" + spec + "' needs " + std::to_string(p) + " coordinates");
            Vector point(p);
            for (Eigen::Index i = 0; i < p; ++i) point(i) = parse_bound(parts[static_cast<std::size_t>(i)], spec);
            return ViolationSet::singleton(point);
        }
        return ViolationSet::singleton(Vector::Constant(p, parse_bound(rest, spec)));
    }
    if (kind == "box") {
        Vector lower(p), upper(p);
        if (auto body = bracket_body(rest)) {
            const auto rows = detail::split(*body, ';');
            if (static_cast<Eigen::Index>(rows.size()) != p)
                throw ConfigError("box in '" + spec + "' needs " + std::to_string(p) + " coordinate intervals");
            for (Eigen::Index i = 0; i < p; ++i) {
                const auto lu = detail::split(rows[static_cast<std::size_t>(i)], ',');
                if (lu.size() != 2) throw ConfigError("box interval must be 'l,u' in '" + spec + "'");
                lower(i) = parse_bound(lu[0], spec);
                upper(i) = parse_bound(lu[1], spec);
            }
        } else {
            const auto lu = detail::split(rest, ':');
            if (lu.size() != 2) throw ConfigError("box spec must be 'box:l:u' or 'box:[...]', got '" + spec + "'");
            lower.setConstant(parse_bound(lu[0], spec));
            upper.setConstant(parse_bound(lu[1], spec));
        }
        return ViolationSet::box(lower, upper);
    }
    if (kind == "l2") return ViolationSet::l2_ball(parse_bound(rest, spec));
    throw ConfigError("unknown violation set kind '" + kind + "' in '" + spec + "'");
}

} // namespace possiv
