#pragma once

#include "possiv/dataset.hpp"
#include "possiv/error.hpp"
#include "possiv/posterior.hpp"
#include "possiv/reduced_form.hpp"
#include "possiv/rng.hpp"
#include "possiv/validify.hpp"
#include "possiv/violation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace possiv {

/// Gaussian IV data-generating process: X = Z gamma2 + eta,
/// Y = beta X + Z alpha + eps, (eps, eta) unit variances with correlation rho.
struct DgpConfig {
    int n = 100;
    int p = 1;
    double beta_true = 1.0;
    Vector gamma2 = Vector::Ones(1);
    Vector alpha_true = Vector::Zero(1);
    double rho = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (p < 1 || n < p + 2) throw ConfigError("DGP needs p >= 1 and n >= p + 2");
        if (gamma2.size() != p || alpha_true.size() != p) throw ConfigError("DGP coefficient lengths must equal p");
        if (!(std::abs(rho) < 1.0)) throw ConfigError("DGP error correlation must satisfy |rho| < 1");
    }

    /// Single instrument, gamma2 = 1, beta = 1, rho = 1/2.
    static DgpConfig experiment1(double alpha) {
        DgpConfig c;
        c.alpha_true = Vector::Constant(1, alpha);
        return c;
    }

    /// p = 5 instruments with gamma2 = 1/4 each; the first s have alpha_i = 0.1.
    static DgpConfig experiment2(int s, int p = 5) {
        if (s < 0 || s > p) throw ConfigError("number of invalid instruments must lie in [0, p]");
        DgpConfig c;
        c.p = p;
        c.gamma2 = Vector::Constant(p, 0.25);
        c.alpha_true = Vector::Zero(p);
        c.alpha_true.head(s).setConstant(0.1);
        return c;
    }
};

template <class Rng>
CanonicalData generate_dataset(const DgpConfig& cfg, Rng& rng) {
    cfg.validate();
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index n = cfg.n, p = cfg.p;
    Matrix z(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) z(i, j) = normal(rng);
    Vector eps(n), eta(n);
    const double c = std::sqrt(1.0 - cfg.rho * cfg.rho);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double e1 = normal(rng);
        const double e2 = normal(rng);
        eps(i) = e1;
        eta(i) = cfg.rho * e1 + c * e2;
    }
    Matrix w(n, 2);
    w.col(1) = z * cfg.gamma2 + eta;
    w.col(0) = cfg.beta_true * w.col(1) + z * cfg.alpha_true + eps;
    w.col(0).array() -= w.col(0).mean();
    w.col(1).array() -= w.col(1).mean();
    return make_canonical(std::move(w), std::move(z));
}

struct TslsResult {
    double estimate = 0.0;
    double se = 0.0;
    Interval ci95;
};

/// Two-stage least squares with homoskedastic 1/n standard error.
inline TslsResult tsls(const CanonicalData& data) {
    const ReducedFormFit fit = fit_reduced_form(data);
    TslsResult r;
    r.estimate = tsls_estimate(fit);
    const Vector resid = data.w.col(0) - r.estimate * data.w.col(1);
    const double sigma2 = resid.squaredNorm() / static_cast<double>(data.n());
    const double first_stage = fit.gamma2().dot(fit.gram * fit.gamma2());
    r.se = std::sqrt(sigma2 / first_stage);
    r.ci95 = Interval{r.estimate - 1.96 * r.se, r.estimate + 1.96 * r.se};
    return r;
}

enum class ValidifyKind { Chi2, MonteCarlo };

/// One row of a coverage study: TSLS, or a possibilistic method given by a
/// violation set and a validification kind.
struct MethodSpec {
    std::string label;
    bool is_tsls = false;
    std::string violation;  // CLI syntax, resolved against p at run time
    ValidifyKind validify = ValidifyKind::Chi2;

    static MethodSpec tsls_method() { return MethodSpec{"TSLS", true, {}, ValidifyKind::Chi2}; }

    static MethodSpec possibilistic(const std::string& violation, ValidifyKind kind, Eigen::Index p) {
        MethodSpec m;
        m.violation = violation;
        m.validify = kind;
        const auto set = parse_violation(violation, p);
        std::string set_label = set.label();
        m.label = "Possibilistic IV (A = " + set_label +
                  (kind == ValidifyKind::Chi2 ? ", chi2-Appr.)" : ", MC)");
        return m;
    }

    /// "tsls" or "<violation>@chi2" / "<violation>@mc".
    static MethodSpec parse(const std::string& spec, Eigen::Index p) {
        if (spec == "tsls" || spec == "TSLS") return tsls_method();
        const auto at = spec.rfind('@');
        if (at == std::string::npos)
            throw ConfigError("method spec '" + spec + "' must be 'tsls' or '<violation>@chi2|mc'");
        const std::string kind = spec.substr(at + 1);
        ValidifyKind k;
        if (kind == "chi2")
            k = ValidifyKind::Chi2;
        else if (kind == "mc")
            k = ValidifyKind::MonteCarlo;
        else
            throw ConfigError("unknown validification '" + kind + "' in method spec '" + spec + "'");
        return possibilistic(spec.substr(0, at), k, p);
    }
};

/// Method rows of the single-instrument coverage table.
inline std::vector<MethodSpec> experiment1_methods() {
    return {
        MethodSpec::possibilistic("singleton:0", ValidifyKind::Chi2, 1),
        MethodSpec::possibilistic("singleton:0", ValidifyKind::MonteCarlo, 1),
        MethodSpec::possibilistic("box:-0.5:0.5", ValidifyKind::Chi2, 1),
        MethodSpec::possibilistic("box:-0.5:0.5", ValidifyKind::MonteCarlo, 1),
        MethodSpec::possibilistic("box:0:0.5", ValidifyKind::Chi2, 1),
        MethodSpec::possibilistic("box:0:0.5", ValidifyKind::MonteCarlo, 1),
        MethodSpec::tsls_method(),
    };
}

/// Method rows of the multi-instrument coverage table.
inline std::vector<MethodSpec> experiment2_methods(Eigen::Index p = 5) {
    return {
        MethodSpec::possibilistic("singleton:0", ValidifyKind::Chi2, p),
        MethodSpec::possibilistic("singleton:0", ValidifyKind::MonteCarlo, p),
        MethodSpec::possibilistic("box:-0.1:0.1", ValidifyKind::Chi2, p),
        MethodSpec::possibilistic("box:-0.1:0.1", ValidifyKind::MonteCarlo, p),
        MethodSpec::possibilistic("box:0:0.2", ValidifyKind::Chi2, p),
        MethodSpec::possibilistic("box:0:0.2", ValidifyKind::MonteCarlo, p),
        MethodSpec::tsls_method(),
    };
}

struct ExperimentOptions {
    int mc_samples = 500;
    double delta = 0.05;
    unsigned threads = 0;  // 0: hardware concurrency
    GridOptions grid;
};

struct CoverageRow {
    std::string method;
    double coverage = 0.0;  // covered / replications
    double mean_width = 0.0;
    int replications = 0;   // replications that produced an interval
    int covered = 0;
    int errors = 0;
    int degenerate_replicates = 0;
};

struct CoverageReport {
    std::vector<CoverageRow> rows;

    const CoverageRow* find(const std::string& label) const {
        for (const auto& r : rows)
            if (r.method == label) return &r;
        return nullptr;
    }
};

/// Interval produced by one method on one dataset.
struct MethodInterval {
    Interval interval;
    int degenerate_replicates = 0;
};

inline MethodInterval method_interval(const MethodSpec& method, const CanonicalData& data, double delta,
                                      int mc_samples, std::uint64_t mc_seed, const GridOptions& grid = {}) {
    MethodInterval out;
    if (method.is_tsls) {
        out.interval = tsls(data).ci95;
        return out;
    }
    const ReducedFormFit fit = fit_reduced_form(data);
    const ViolationSet set = parse_violation(method.violation, data.p());
    const PossibilityCurve curve = build_curve(fit, set, grid);
    if (method.validify == ValidifyKind::Chi2) {
        out.interval = level_set(validify_chi2(curve), delta).interval;
    } else {
        const McValidifier engine(curve, data.z, mc_samples, mc_seed);
        const auto r = mc_level_set(engine, delta);
        out.interval = r.level.interval;
        out.degenerate_replicates = r.degenerate_replicates;
    }
    return out;
}

namespace detail {

template <class F>
void parallel_for(int count, unsigned threads, F&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(count, 1)));
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) body(i);
        });
}

} // namespace detail

/// Coverage study: per replication generate data, compute each method's
/// 100(1 - delta)% interval and record whether beta_true is covered.
/// Replication r uses streams keyed by (seed, r, ...) and results do not
/// depend on scheduling.
inline CoverageReport run_experiment(const DgpConfig& cfg, const std::vector<MethodSpec>& methods, int reps,
                                     std::uint64_t seed, const ExperimentOptions& opts = {}) {
    cfg.validate();
    if (reps < 1) throw ConfigError("number of replications must be positive");
    if (methods.empty()) throw ConfigError("no methods given");
    for (const auto& m : methods)
        if (!m.is_tsls) parse_violation(m.violation, cfg.p);

    struct Cell {
        std::optional<Interval> interval;
        int degenerate = 0;
    };
    const std::size_t k = methods.size();
    std::vector<Cell> cells(static_cast<std::size_t>(reps) * k);

    detail::parallel_for(reps, opts.threads, [&](int rep) {
        StreamRng data_rng(seed, {static_cast<std::uint64_t>(rep), 0});
        const CanonicalData data = generate_dataset(cfg, data_rng);
        for (std::size_t mi = 0; mi < k; ++mi) {
            Cell& cell = cells[static_cast<std::size_t>(rep) * k + mi];
            try {
                const auto mc_seed = derive_key(seed, {static_cast<std::uint64_t>(rep), 1, mi});
                const auto r = method_interval(methods[mi], data, opts.delta, opts.mc_samples, mc_seed, opts.grid);
                cell.interval = r.interval;
                cell.degenerate = r.degenerate_replicates;
            } catch (const Error&) {
                cell.interval.reset();
            }
        }
    });

    CoverageReport report;
    for (std::size_t mi = 0; mi < k; ++mi) {
        CoverageRow row;
        row.method = methods[mi].label;
        double width_sum = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            const Cell& cell = cells[static_cast<std::size_t>(rep) * k + mi];
            row.degenerate_replicates += cell.degenerate;
            if (!cell.interval) {
                ++row.errors;
                continue;
            }
            ++row.replications;
            width_sum += cell.interval->width();
            if (cell.interval->contains(cfg.beta_true)) ++row.covered;
        }
        if (row.replications > 0) {
            row.coverage = static_cast<double>(row.covered) / static_cast<double>(row.replications);
            row.mean_width = width_sum / static_cast<double>(row.replications);
        }
        report.rows.push_back(row);
    }
    return report;
}

/// Monte Carlo validified possibility of the true beta, one value per
/// replication (for checking P(pi_W(beta_true) <= delta) <= delta).
inline std::vector<double> validified_at_truth(const DgpConfig& cfg, const std::string& violation, int mc_samples,
                                               int reps, std::uint64_t seed, unsigned threads = 0,
                                               const GridOptions& grid = {}) {
    cfg.validate();
    if (reps < 1) throw ConfigError("number of replications must be positive");
    const ViolationSet set = parse_violation(violation, cfg.p);
    std::vector<double> out(static_cast<std::size_t>(reps), 1.0);
    detail::parallel_for(reps, threads, [&](int rep) {
        StreamRng data_rng(seed, {static_cast<std::uint64_t>(rep), 0});
        const CanonicalData data = generate_dataset(cfg, data_rng);
        try {
            const PossibilityCurve curve = build_curve(fit_reduced_form(data), set, grid);
            const McValidifier engine(curve, data.z, mc_samples, derive_key(seed, {static_cast<std::uint64_t>(rep), 2}));
            out[static_cast<std::size_t>(rep)] = engine.at_beta(cfg.beta_true, 0).value;
        } catch (const Error&) {
            out[static_cast<std::size_t>(rep)] = 1.0;
        }
    });
    return out;
}

} // namespace possiv
