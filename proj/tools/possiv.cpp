// Command-line front end: fit, sweep, hypothesis, simulate.

#include "possiv/possiv.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace possiv;

struct DataFlags {
    DataSpec spec;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", spec.path, "CSV file with a header row")->required();
        cmd->add_option("--outcome", spec.outcome, "outcome column")->required();
        cmd->add_option("--treatment", spec.treatment, "treatment column")->required();
        cmd->add_option("--instruments", spec.instruments, "comma-separated instrument columns")
            ->required()
            ->delimiter(',');
        cmd->add_option("--covariates", spec.covariates, "comma-separated exogenous covariate columns")
            ->delimiter(',');
        cmd->add_flag("--intercept", spec.intercept, "add an intercept to the covariates");
        cmd->add_flag("--standardise", spec.standardise, "rescale instruments to unit standard deviation");
    }
};

struct AnalysisFlags {
    AnalysisRequest req;

    void attach(CLI::App* cmd, bool with_violation = true) {
        if (with_violation)
            cmd->add_option("--violation", req.violation,
                            "violation set: none | singleton:c | box:l:u | box:[l1,u1;...] | l2:tau");
        cmd->add_option("--method", req.method, "validification: chi2 | mc");
        cmd->add_option("--mc-samples", req.mc_samples, "Monte Carlo sample size");
        cmd->add_option("--seed", req.seed, "random seed");
        cmd->add_option("--delta", req.deltas, "comma-separated levels in (0,1)")->delimiter(',');
    }
};

Direction parse_direction(const std::string& s) {
    if (s == "greater") return Direction::Greater;
    if (s == "less") return Direction::Less;
    throw ConfigError("direction must be 'greater' or 'less', got '" + s + "'");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    os << text;
}

int run(int argc, char** argv) {
    CLI::App app{"Possibilistic instrumental-variable regression"};
    app.require_subcommand(1);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "validified posterior possibility curve and intervals");
    DataFlags fit_data;
    AnalysisFlags fit_analysis;
    std::string fit_out = "possiv";
    fit_data.attach(fit_cmd);
    fit_analysis.attach(fit_cmd);
    fit_cmd->add_option("--out", fit_out, "output prefix for <out>_curve.csv and <out>_summary.json");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "intervals and hypothesis bounds over growing violation sets");
    DataFlags sweep_data;
    AnalysisFlags sweep_analysis;
    std::vector<double> halfwidths, taus;
    std::vector<std::string> violations;
    double sweep_threshold = 0.0;
    std::string sweep_direction = "greater";
    std::string sweep_out;
    sweep_data.attach(sweep_cmd);
    sweep_analysis.attach(sweep_cmd, false);
    sweep_cmd->add_option("--box-halfwidths", halfwidths, "comma-separated h for boxes [-h,h]^p")->delimiter(',');
    sweep_cmd->add_option("--taus", taus, "comma-separated l2 radii")->delimiter(',');
    sweep_cmd->add_option("--violations", violations, "explicit violation sets, smallest first");
    sweep_cmd->add_option("--threshold", sweep_threshold, "hypothesis threshold c");
    sweep_cmd->add_option("--direction", sweep_direction, "greater | less");
    sweep_cmd->add_option("--out", sweep_out, "CSV output path (stdout when omitted)");

    // hypothesis
    auto* hyp_cmd = app.add_subcommand("hypothesis", "lower/upper probability of beta > c or beta < c");
    DataFlags hyp_data;
    AnalysisFlags hyp_analysis;
    double hyp_threshold = 0.0;
    std::string hyp_direction = "greater";
    std::string hyp_out;
    hyp_data.attach(hyp_cmd);
    hyp_analysis.attach(hyp_cmd);
    hyp_cmd->add_option("--threshold", hyp_threshold, "hypothesis threshold c");
    hyp_cmd->add_option("--direction", hyp_direction, "greater | less");
    hyp_cmd->add_option("--out", hyp_out, "JSON output path (stdout when omitted)");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "coverage study on the built-in Gaussian designs");
    int experiment = 1;
    double alpha = 0.0;
    int s_invalid = 0;
    int reps = 1000;
    std::vector<std::string> method_specs;
    std::uint64_t sim_seed = 1;
    int sim_mc = 500;
    unsigned threads = 0;
    double sim_delta = 0.05;
    std::string sim_out;
    sim_cmd->add_option("--experiment", experiment, "1: single instrument, 2: five instruments");
    sim_cmd->add_option("--alpha", alpha, "direct effect (experiment 1)");
    sim_cmd->add_option("--s", s_invalid, "number of invalid instruments (experiment 2)");
    sim_cmd->add_option("--reps", reps, "replications");
    sim_cmd->add_option("--methods", method_specs, "methods: tsls | <violation>@chi2 | <violation>@mc");
    sim_cmd->add_option("--seed", sim_seed, "random seed");
    sim_cmd->add_option("--mc-samples", sim_mc, "Monte Carlo sample size per grid point");
    sim_cmd->add_option("--threads", threads, "worker threads (0: all cores)");
    sim_cmd->add_option("--delta", sim_delta, "interval level delta (coverage of 1 - delta)");
    sim_cmd->add_option("--out", sim_out, "report CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[config]: " << e.what() << '\n';
        return static_cast<int>(ErrorCode::Config);
    }

    if (*fit_cmd) {
        const CanonicalData data = load_canonical(fit_data.spec);
        const FitResult result = run_fit(data, fit_analysis.req);
        write_curve_csv(fit_out + "_curve.csv", to_table(result.curve));
        const auto summary = summary_json(result).dump(2);
        write_text(fit_out + "_summary.json", summary + "\n");
        std::cout << summary << '\n';
    } else if (*sweep_cmd) {
        std::vector<std::string> sets = violations;
        if (!halfwidths.empty()) sets = box_sweep(halfwidths);
        if (!taus.empty()) sets = l2_sweep(taus);
        if (sets.empty()) throw ConfigError("sweep needs --box-halfwidths, --taus or --violations");
        const CanonicalData data = load_canonical(sweep_data.spec);
        const SweepResult result =
            run_sweep(data, sweep_analysis.req, sets, sweep_threshold, parse_direction(sweep_direction));
        if (sweep_out.empty()) {
            write_sweep_csv(std::cout, result);
        } else {
            std::ofstream os(sweep_out);
            if (!os) throw ConfigError("cannot write '" + sweep_out + "'");
            write_sweep_csv(os, result);
        }
        if (result.breakpoint)
            std::cerr << "breakpoint: " << result.rows[*result.breakpoint].label << '\n';
        else
            std::cerr << "breakpoint: none\n";
        if (!result.widths_monotone) std::cerr << "warning: interval widths are not nondecreasing\n";
    } else if (*hyp_cmd) {
        const CanonicalData data = load_canonical(hyp_data.spec);
        const FitResult result = run_fit(data, hyp_analysis.req);
        const auto hb = hypothesis_bounds(result.curve, hyp_threshold, parse_direction(hyp_direction));
        nlohmann::json j{{"violation", result.curve.base.set.label()},
                         {"threshold", hyp_threshold},
                         {"direction", hyp_direction},
                         {"lower", hb.lower},
                         {"upper", hb.upper},
                         {"conservative", hb.conservative}};
        if (hyp_out.empty())
            std::cout << j.dump(2) << '\n';
        else
            write_text(hyp_out, j.dump(2) + "\n");
    } else if (*sim_cmd) {
        if (reps < 1) throw ConfigError("--reps must be positive");
        DgpConfig cfg;
        std::vector<MethodSpec> methods;
        if (experiment == 1) {
            cfg = DgpConfig::experiment1(alpha);
        } else if (experiment == 2) {
            cfg = DgpConfig::experiment2(s_invalid);
        } else {
            throw ConfigError("--experiment must be 1 or 2");
        }
        if (method_specs.empty()) {
            methods = experiment == 1 ? experiment1_methods() : experiment2_methods(cfg.p);
        } else {
            for (const auto& m : method_specs) methods.push_back(MethodSpec::parse(m, cfg.p));
        }
        ExperimentOptions opts;
        opts.mc_samples = sim_mc;
        opts.threads = threads;
        opts.delta = sim_delta;
        if (sim_mc < 1) throw ConfigError("--mc-samples must be at least 1");
        if (!(sim_delta > 0.0 && sim_delta < 1.0)) throw ConfigError("--delta must lie in (0,1)");
        const CoverageReport report = run_experiment(cfg, methods, reps, sim_seed, opts);
        if (sim_out.empty())
            write_coverage_csv(std::cout, report);
        else
            write_coverage_csv(sim_out, report);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const possiv::Error& e) {
        std::cerr << "error[" << possiv::to_string(e.code()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
}
