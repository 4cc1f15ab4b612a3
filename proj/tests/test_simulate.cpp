#include "support.hpp"

#include <gtest/gtest.h>

using namespace possiv;

namespace {

CanonicalData draw(const DgpConfig& cfg, std::uint64_t seed, std::uint64_t rep = 0) {
    StreamRng rng(seed, {rep, 0});
    return generate_dataset(cfg, rng);
}

} // namespace

TEST(DgpConfig, PresetsAndValidation) {
    const DgpConfig e1 = DgpConfig::experiment1(0.25);
    EXPECT_EQ(e1.n, 100);
    EXPECT_EQ(e1.p, 1);
    EXPECT_EQ(e1.alpha_true(0), 0.25);
    EXPECT_EQ(e1.gamma2(0), 1.0);
    EXPECT_EQ(e1.rho, 0.5);

    const DgpConfig e2 = DgpConfig::experiment2(3);
    EXPECT_EQ(e2.p, 5);
    EXPECT_EQ(e2.gamma2, Vector::Constant(5, 0.25));
    Vector alpha(5);
    alpha << 0.1, 0.1, 0.1, 0.0, 0.0;
    EXPECT_EQ(e2.alpha_true, alpha);

    EXPECT_THROW(DgpConfig::experiment2(6), ConfigError);
    DgpConfig bad = e1;
    bad.rho = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = e1;
    bad.gamma2 = Vector::Ones(2);
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(GenerateDataset, CentredAndDeterministic) {
    const DgpConfig cfg = DgpConfig::experiment2(2);
    const CanonicalData a = draw(cfg, 5), b = draw(cfg, 5), c = draw(cfg, 6);
    EXPECT_EQ(a.w, b.w);
    EXPECT_EQ(a.z, b.z);
    EXPECT_NE(a.w, c.w);
    EXPECT_LE(a.w.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.gram - a.z.transpose() * a.z).cwiseAbs().maxCoeff(), 1e-10 * a.gram.cwiseAbs().maxCoeff());
}

TEST(GenerateDataset, NullDesignHasUncorrelatedTreatment) {
    DgpConfig cfg = DgpConfig::experiment1(0.0);
    cfg.rho = 0.0;
    cfg.gamma2 = Vector::Zero(1);
    cfg.n = 400;
    int inside = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const CanonicalData d = draw(cfg, 700 + s);
        const Vector z = d.z.col(0).array() - d.z.col(0).mean();
        const double corr = z.dot(d.w.col(1)) / (z.norm() * d.w.col(1).norm());
        if (std::abs(corr) <= 4.0 / std::sqrt(400.0)) ++inside;
    }
    EXPECT_GE(inside, 49);
}

TEST(GenerateDataset, ErrorCorrelationMatchesRho) {
    DgpConfig cfg = DgpConfig::experiment1(0.0);
    cfg.n = 20000;
    const CanonicalData d = draw(cfg, 11);
    const ReducedFormFit f = fit_reduced_form(d);
    // structural errors: eps = Y - beta X, eta = X - Z gamma2
    const Vector eps = d.w.col(0) - d.w.col(1);
    const Vector eta = d.w.col(1) - d.z.col(0);
    const double corr = (eps.array() - eps.mean()).matrix().dot((eta.array() - eta.mean()).matrix()) /
                        std::sqrt((eps.array() - eps.mean()).square().sum() * (eta.array() - eta.mean()).square().sum());
    EXPECT_NEAR(corr, 0.5, 0.03);
    EXPECT_NEAR(f.gamma_hat(0, 1), 1.0, 0.03);
}

TEST(Tsls, JustIdentifiedRatioAndNoiseFree) {
    const CanonicalData d = draw(DgpConfig::experiment1(0.0), 12);
    const TslsResult r = tsls(d);
    EXPECT_NEAR(r.estimate, d.z.col(0).dot(d.w.col(0)) / d.z.col(0).dot(d.w.col(1)), 1e-12);
    EXPECT_NEAR(r.ci95.hi - r.ci95.lo, 2.0 * 1.96 * r.se, 1e-12);

    auto& g = oracle::engine(13);
    const Matrix z = oracle::random_matrix(g, 50, 2);
    Matrix w(50, 2);
    w.col(1) = z * Vector::Constant(2, 0.7);
    w.col(0) = -0.4 * w.col(1);
    const TslsResult nf = tsls(make_canonical(w, z));
    EXPECT_NEAR(nf.estimate, -0.4, 1e-12);
    EXPECT_NEAR(nf.se, 0.0, 1e-7);
}

TEST(Tsls, UnbiasedAtValidInstrumentDesign) {
    const DgpConfig cfg = DgpConfig::experiment1(0.0);
    double sum = 0.0;
    for (int r = 0; r < 1000; ++r) sum += tsls(draw(cfg, 14, static_cast<std::uint64_t>(r))).estimate;
    EXPECT_NEAR(sum / 1000.0, 1.0, 0.02);
}

TEST(GenerateDataset, MultiInstrumentFirstStageRSquared) {
    const DgpConfig cfg = DgpConfig::experiment2(0);
    double sum = 0.0;
    constexpr int reps = 500;
    for (int r = 0; r < reps; ++r) {
        const CanonicalData d = draw(cfg, 15, static_cast<std::uint64_t>(r));
        const Vector x = d.w.col(1);
        const Vector fitted = d.z * oracle::normal_equations_solve(d.z, x);
        sum += fitted.squaredNorm() / x.squaredNorm();
    }
    EXPECT_NEAR(sum / reps, 0.25, 0.05);
}

TEST(MethodSpec, LabelsMatchCoverageTables) {
    std::vector<std::string> labels;
    for (const auto& m : experiment1_methods()) labels.push_back(m.label);
    const std::vector<std::string> expected = {
        "Possibilistic IV (A = {0}, chi2-Appr.)",
        "Possibilistic IV (A = {0}, MC)",
        "Possibilistic IV (A = [-0.5, 0.5], chi2-Appr.)",
        "Possibilistic IV (A = [-0.5, 0.5], MC)",
        "Possibilistic IV (A = [0.0, 0.5], chi2-Appr.)",
        "Possibilistic IV (A = [0.0, 0.5], MC)",
        "TSLS",
    };
    EXPECT_EQ(labels, expected);
    const auto e2 = experiment2_methods();
    ASSERT_EQ(e2.size(), 7u);
    EXPECT_EQ(e2[3].label, "Possibilistic IV (A = [-0.1, 0.1]^5, MC)");
    EXPECT_EQ(e2[4].label, "Possibilistic IV (A = [0.0, 0.2]^5, chi2-Appr.)");
}

TEST(MethodSpec, Parse) {
    const MethodSpec t = MethodSpec::parse("tsls", 1);
    EXPECT_TRUE(t.is_tsls);
    const MethodSpec m = MethodSpec::parse("box:-0.5:0.5@mc", 1);
    EXPECT_FALSE(m.is_tsls);
    EXPECT_EQ(m.validify, ValidifyKind::MonteCarlo);
    EXPECT_EQ(m.violation, "box:-0.5:0.5");
    EXPECT_THROW(MethodSpec::parse("singleton:0", 1), ConfigError);
    EXPECT_THROW(MethodSpec::parse("singleton:0@bayes", 1), ConfigError);
    EXPECT_THROW(MethodSpec::parse("box:1:0@chi2", 1), ConfigError);
}

TEST(RunExperiment, DeterministicAndThreadIndependent) {
    const DgpConfig cfg = DgpConfig::experiment1(0.25);
    const std::vector<MethodSpec> methods = {MethodSpec::parse("singleton:0@chi2", 1),
                                             MethodSpec::parse("box:-0.5:0.5@mc", 1), MethodSpec::tsls_method()};
    ExperimentOptions opts;
    opts.mc_samples = 30;
    opts.threads = 1;
    const CoverageReport a = run_experiment(cfg, methods, 12, 77, opts);
    opts.threads = 3;
    const CoverageReport b = run_experiment(cfg, methods, 12, 77, opts);
    ASSERT_EQ(a.rows.size(), 3u);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].method, b.rows[i].method);
        EXPECT_EQ(a.rows[i].covered, b.rows[i].covered);
        EXPECT_EQ(a.rows[i].coverage, b.rows[i].coverage);
        EXPECT_EQ(a.rows[i].mean_width, b.rows[i].mean_width);
        EXPECT_EQ(a.rows[i].coverage,
                  static_cast<double>(a.rows[i].covered) / static_cast<double>(a.rows[i].replications));
        EXPECT_EQ(a.rows[i].replications + a.rows[i].errors, 12);
    }
}

TEST(RunExperiment, MatchesPerReplicationIntervals) {
    const DgpConfig cfg = DgpConfig::experiment1(0.0);
    const std::vector<MethodSpec> methods = {MethodSpec::parse("singleton:0@chi2", 1), MethodSpec::tsls_method()};
    const CoverageReport rep = run_experiment(cfg, methods, 20, 31, {});
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        int covered = 0;
        for (int r = 0; r < 20; ++r) {
            const CanonicalData d = draw(cfg, 31, static_cast<std::uint64_t>(r));
            const auto iv = method_interval(methods[mi], d, 0.05, 500, 0);
            if (iv.interval.contains(1.0)) ++covered;
        }
        EXPECT_EQ(rep.rows[mi].covered, covered);
    }
    const CanonicalData d0 = draw(cfg, 31, 0);
    EXPECT_EQ(method_interval(MethodSpec::tsls_method(), d0, 0.05, 1, 0).interval.lo, tsls(d0).ci95.lo);
}

TEST(RunExperiment, McCoverageRespectsValidityBound) {
    ExperimentOptions opts;
    opts.mc_samples = 200;
    constexpr int reps = 100;
    const CoverageReport rep =
        run_experiment(DgpConfig::experiment1(0.25), {MethodSpec::parse("box:-0.5:0.5@mc", 1)}, reps, 4242, opts);
    EXPECT_GE(rep.rows[0].coverage, 0.95 - 3.0 * std::sqrt(0.95 * 0.05 / reps));
}

TEST(RunExperiment, InvalidInstrumentBreaksNaiveCoverage) {
    const CoverageReport rep = run_experiment(DgpConfig::experiment1(0.5),
                                              {MethodSpec::parse("singleton:0@chi2", 1), MethodSpec::tsls_method()}, 200, 5, {});
    for (const auto& row : rep.rows) EXPECT_LT(row.coverage, 0.05) << row.method;
    ASSERT_NE(rep.find("TSLS"), nullptr);
    EXPECT_EQ(rep.find("nope"), nullptr);
}

TEST(RunExperiment, RejectsBadArguments) {
    const DgpConfig cfg = DgpConfig::experiment1(0.0);
    EXPECT_THROW(run_experiment(cfg, {MethodSpec::tsls_method()}, 0, 1, {}), ConfigError);
    EXPECT_THROW(run_experiment(cfg, {}, 10, 1, {}), ConfigError);
    MethodSpec wrong_dim = MethodSpec::tsls_method();
    wrong_dim.is_tsls = false;
    wrong_dim.violation = "singleton:[0,0]";
    EXPECT_THROW(run_experiment(cfg, {wrong_dim}, 10, 1, {}), ConfigError);
}
