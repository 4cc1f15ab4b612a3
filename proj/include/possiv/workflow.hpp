#pragma once

#include "possiv/dataset.hpp"
#include "possiv/error.hpp"
#include "possiv/io.hpp"
#include "possiv/posterior.hpp"
#include "possiv/reduced_form.hpp"
#include "possiv/validify.hpp"
#include "possiv/violation.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace possiv {

struct DataSpec {
    std::string path;
    std::string outcome;
    std::string treatment;
    std::vector<std::string> instruments;
    std::vector<std::string> covariates;
    bool intercept = false;
    bool standardise = false;
};

inline CanonicalData load_canonical(const DataSpec& spec) {
    const IvDataset raw =
        load_csv(spec.path, spec.outcome, spec.treatment, spec.instruments, spec.covariates, spec.intercept);
    CanonicalData data = project_out_covariates(raw);
    if (spec.standardise) data = standardise_instruments(std::move(data));
    return data;
}

struct AnalysisRequest {
    std::string violation = "singleton:0";
    std::string method = "chi2";  // chi2 | mc
    int mc_samples = 1000;
    std::uint64_t seed = 1;
    std::vector<double> deltas{0.05};
    GridOptions grid;

    void validate() const {
        if (method != "chi2" && method != "mc") throw ConfigError("method must be 'chi2' or 'mc', got '" + method + "'");
        if (mc_samples < 1) throw ConfigError("--mc-samples must be at least 1");
        if (deltas.empty()) throw ConfigError("at least one level is required");
        for (double d : deltas)
            if (!(d > 0.0 && d < 1.0)) throw ConfigError("levels must lie strictly between 0 and 1");
    }

    ValidifyMethod validify_method() const {
        if (method == "mc") return MonteCarlo{mc_samples, seed};
        return Chi2{};
    }
};

struct FitResult {
    ValidifiedCurve curve;
    std::string violation;
    std::vector<double> deltas;
    std::vector<LevelSet> raw;
    std::vector<LevelSet> validified;
};

inline FitResult run_fit(const CanonicalData& data, const AnalysisRequest& req) {
    req.validate();
    const ReducedFormFit fit = fit_reduced_form(data);
    const ViolationSet set = parse_violation(req.violation, data.p());
    FitResult r{validify(build_curve(fit, set, req.grid), data.z, req.validify_method()), req.violation, req.deltas, {}, {}};
    for (double d : req.deltas) {
        r.raw.push_back(level_set(r.curve.base, d));
        r.validified.push_back(level_set(r.curve, d));
    }
    return r;
}

namespace detail {

inline nlohmann::json interval_json(const LevelSet& ls) {
    return nlohmann::json{{"lo", ls.interval.lo},
                          {"hi", ls.interval.hi},
                          {"contiguous", ls.contiguous},
                          {"unbounded_below", ls.unbounded_below},
                          {"unbounded_above", ls.unbounded_above}};
}

} // namespace detail

inline nlohmann::json summary_json(const FitResult& r) {
    const PossibilityCurve& c = r.curve.base;
    nlohmann::json j;
    j["violation"] = r.violation;
    j["violation_label"] = c.set.label();
    j["method"] = r.curve.is_chi2() ? "chi2" : "mc";
    if (const auto* mc = std::get_if<MonteCarlo>(&r.curve.method)) {
        j["mc_samples"] = mc->m;
        j["seed"] = mc->seed;
        j["degenerate_replicates"] = r.curve.degenerate_replicates;
    }
    j["anchor"] = c.grid.anchor;
    j["scale"] = c.grid.scale;
    j["normaliser"] = c.normaliser;
    j["normaliser_beta"] = c.normaliser_beta;
    if (c.identified) {
        j["identification_region"] = {c.identified->lo, c.identified->hi};
    } else {
        j["identification_region"] = nullptr;
    }
    j["delta"] = r.deltas.front();
    j["interval_raw"] = {r.raw.front().interval.lo, r.raw.front().interval.hi};
    j["interval_validified"] = {r.validified.front().interval.lo, r.validified.front().interval.hi};
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t i = 0; i < r.deltas.size(); ++i)
        levels.push_back({{"delta", r.deltas[i]},
                          {"raw", detail::interval_json(r.raw[i])},
                          {"validified", detail::interval_json(r.validified[i])}});
    j["levels"] = levels;
    const LevelSet& main = r.validified.front();
    j["flags"] = {{"flat", c.flags.flat},
                  {"unbounded", main.unbounded() || c.flags.flat},
                  {"curve_unbounded_below", c.flags.unbounded_below},
                  {"curve_unbounded_above", c.flags.unbounded_above},
                  {"expansion_capped", c.flags.expansion_capped},
                  {"non_contiguous", !main.contiguous}};
    if (c.flags.expansion_capped)
        j["diagnostic"] = "possibility does not decay; interval effectively unbounded";
    return j;
}

struct SweepRow {
    std::string violation;
    std::string label;
    LevelSet interval;
    HypothesisBounds bounds;
    bool contains_threshold = false;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::optional<std::size_t> breakpoint;  // first row whose interval contains the threshold
    bool widths_monotone = true;
};

/// Fits each violation set in turn (ordered from small to large) and reports
/// the validified interval at the first level plus hypothesis bounds.
inline SweepResult run_sweep(const CanonicalData& data, const AnalysisRequest& base,
                             const std::vector<std::string>& violations, double threshold, Direction direction) {
    if (violations.empty()) throw ConfigError("sweep needs at least one violation set");
    SweepResult out;
    double last_width = -1.0;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        AnalysisRequest req = base;
        req.violation = violations[i];
        const FitResult fit = run_fit(data, req);
        SweepRow row;
        row.violation = violations[i];
        row.label = fit.curve.base.set.label();
        row.interval = fit.validified.front();
        row.bounds = hypothesis_bounds(fit.curve, threshold, direction);
        row.contains_threshold = row.interval.interval.contains(threshold);
        if (row.contains_threshold && !out.breakpoint) out.breakpoint = i;
        const double width = row.interval.interval.width();
        if (width < last_width - 1e-9 * std::max(1.0, last_width)) out.widths_monotone = false;
        last_width = width;
        out.rows.push_back(std::move(row));
    }
    return out;
}

inline std::vector<std::string> box_sweep(const std::vector<double>& halfwidths) {
    std::vector<std::string> out;
    double prev = -1.0;
    for (double h : halfwidths) {
        if (h < 0.0) throw ConfigError("box half-widths must be nonnegative");
        if (h < prev) throw ConfigError("box half-widths must be nondecreasing");
        prev = h;
        out.push_back("box:" + format_real(-h) + ":" + format_real(h));
    }
    return out;
}

inline std::vector<std::string> l2_sweep(const std::vector<double>& taus) {
    std::vector<std::string> out;
    double prev = -1.0;
    for (double t : taus) {
        if (t < 0.0) throw ConfigError("radii must be nonnegative");
        if (t < prev) throw ConfigError("radii must be nondecreasing");
        prev = t;
        out.push_back("l2:" + format_real(t));
    }
    return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
    os << "violation,lo,hi,contiguous,unbounded,lower,upper,conservative,contains_threshold\n";
    for (const auto& r : s.rows) {
        os << '"' << r.label << "\"," << format_real(r.interval.interval.lo) << ','
           << format_real(r.interval.interval.hi) << ',' << (r.interval.contiguous ? 1 : 0) << ','
           << (r.interval.unbounded() ? 1 : 0) << ',' << format_real(r.bounds.lower) << ','
           << format_real(r.bounds.upper) << ',' << (r.bounds.conservative ? 1 : 0) << ','
           << (r.contains_threshold ? 1 : 0) << '\n';
    }
}

} // namespace possiv
