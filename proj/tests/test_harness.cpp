#include <spdeavg/spdeavg.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

using namespace spdeavg;

TEST(FitLoglogSlope, ExactPowerLaws) {
    const std::vector<double> x{1, 2, 4}, y{1, 4, 16};
    EXPECT_NEAR(stats::fit_loglog_slope(x, y).slope, 2.0, 1e-14);
    const std::vector<double> c{3, 3, 3};
    EXPECT_NEAR(stats::fit_loglog_slope(x, c).slope, 0.0, 1e-14);
    const std::vector<double> x4{1, 2, 4, 8};
    std::vector<double> y4;
    for (double v : x4) y4.push_back(3.0 * std::pow(v, 1.5));
    const auto f = stats::fit_loglog_slope(x4, y4);
    EXPECT_NEAR(f.slope, 1.5, 1e-12);
    EXPECT_NEAR(f.ci_high - f.ci_low, 0.0, 1e-10);
}

TEST(FitLoglogSlope, Errors) {
    const std::vector<double> x{1, 2, 4}, bad{1, 0, 4};
    EXPECT_THROW(stats::fit_loglog_slope(x, bad), DomainError);
    const std::vector<double> two{1, 2};
    EXPECT_THROW(stats::fit_loglog_slope(two, two), DomainError);
}

TEST(FitLoglogSlope, ConfidenceIntervalUsesStudentT) {
    const std::vector<double> x{1, 2, 4, 8, 16}, y{1.1, 1.9, 4.2, 7.7, 16.5};
    const auto f = stats::fit_loglog_slope(x, y);
    EXPECT_LT(f.ci_low, f.slope);
    EXPECT_GT(f.ci_high, f.slope);
    // t quantile with 3 dof
    EXPECT_NEAR((f.ci_high - f.slope) / f.slope_stderr, 3.182446305284263, 1e-9);
}

TEST(Csv, FormatsSeventeenDigits) {
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(format_double(-2.5e-20), "-2.4999999999999999e-20");
    CsvTable t({"a", "b"});
    t.row().add(1.5).add(std::string("x,y"));
    EXPECT_EQ(t.str(), "a,b\n1.5,\"x,y\"\n");
}

TEST(Config, ParsesSectionsAndFields) {
    const auto c = Config::parse("# comment\n[domain]\nlength = pi\nmodes = 4 # trailing\n\n[initial]\nx0 = 1:1.0, 3:-0.5\n");
    EXPECT_DOUBLE_EQ(c.get_double("domain.length"), std::numbers::pi);
    EXPECT_EQ(c.get_size("domain.modes"), 4u);
    const auto x = c.get_field("initial.x0", 4, 1.0);
    EXPECT_EQ(x[1], 1.0);
    EXPECT_EQ(x[3], -0.5);
    EXPECT_EQ(x[2], 0.0);
    EXPECT_FALSE(c.has("initial.v0"));
    EXPECT_THROW(Config::parse("[initial]\ntime.dt = 0.01\n"), ConfigError);
}

TEST(Config, UnknownKeyReportsPath) {
    try {
        Config::parse("[model]\ngamma = 0.5\ngama = 0.3\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "model.gama");
    }
    try {
        Config::parse("[time]\ndt = abc\n").get_double("time.dt");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "time.dt");
    }
    EXPECT_THROW(Config::parse("[initial]\nx0 = 9:1\n[domain]\nmodes = 4\n").get_field("initial.x0", 4, 1.0), ConfigError);
}

TEST(Config, BuildsSystem) {
    const auto c = Config::parse("[domain]\nlength = pi\nmodes = 8\n[model]\nfixture = bounded_nonlinear\n"
                                 "[time]\nhorizon = 1\ndt = 0.01\nepsilon = 0.1\n");
    const auto s = system_from_config(c);
    EXPECT_EQ(s.coefficients.name, "bounded_nonlinear");
    EXPECT_EQ(s.n_modes, 8u);
    EXPECT_NEAR(dissipativity_margin(s.coefficients), 0.9375, 1e-12);
    EXPECT_THROW(system_from_config(Config::parse("[time]\nhorizon = 1\ndt = 0.3\n")), ConfigError);
    EXPECT_THROW(system_from_config(Config::parse("[noise1]\nfamily = polynomial\np = 1\n")), ConfigError);
}

TEST(Threads, FlagThenEnvironment) {
    EXPECT_EQ(resolve_threads(3u), 3u);
    ::setenv("SPDE_THREADS", "5", 1);
    EXPECT_EQ(resolve_threads(std::nullopt), 5u);
    ::setenv("SPDE_THREADS", "x", 1);
    EXPECT_THROW(resolve_threads(std::nullopt), ConfigError);
    ::unsetenv("SPDE_THREADS");
    EXPECT_EQ(resolve_threads(std::nullopt), 1u);
}

TEST(ParallelFor, CoversAllIndicesAndRethrowsLowest) {
    std::vector<int> hits(100, 0);
    parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    try {
        parallel_for(50, 4, [](std::size_t i) {
            if (i == 7 || i == 30) throw std::runtime_error(std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "7");
    }
}

namespace {

Config mini_rate_config() {
    return Config::parse("[domain]\nlength = pi\nmodes = 4\n[model]\nfixture = linear_ou\n"
                         "[time]\nhorizon = 0.25\n"
                         "[study]\nepsilons = 0.25, 0.125, 0.0625, 0.03125\nreplicas = 16\ndt_base = 0.005\n");
}

} // namespace

TEST(RateStudy, DeterministicAcrossThreadCounts) {
    const auto cfg = mini_rate_config();
    const auto sys = system_from_config(cfg);
    const auto p = rate_params_from_config(cfg);
    const auto prov = provider_from_config(cfg, sys, 11);
    const auto a = run_rate_study(sys, prov, p, 11, 1);
    const auto b = run_rate_study(sys, prov, p, 11, 4);
    EXPECT_EQ(rate_table(a).str(), rate_table(b).str());
    EXPECT_EQ(rate_summary_table(a).str(), rate_summary_table(b).str());
    EXPECT_EQ(a.rows.size(), 4u);
    for (const auto& r : a.rows) {
        EXPECT_NEAR(r.delta, std::sqrt(r.epsilon), 1e-15);
        EXPECT_LE(r.dt, r.epsilon / 10.0 + 1e-15);
        EXPECT_EQ(r.aborted, 0u);
    }
}

TEST(RateStudy, StderrHalvesWhenReplicasQuadruple) {
    auto cfg = mini_rate_config();
    const auto sys = system_from_config(cfg);
    auto p = rate_params_from_config(cfg);
    p.self_check = false;
    const auto prov = provider_from_config(cfg, sys, 12);
    p.replicas = 64;
    const auto a = run_rate_study(sys, prov, p, 12, 1);
    p.replicas = 256;
    const auto b = run_rate_study(sys, prov, p, 12, 1);
    const double ratio = a.rows[0].mse_stderr / b.rows[0].mse_stderr;
    EXPECT_NEAR(ratio, 2.0, 0.4);
}

TEST(RateStudy, ConfigValidation) {
    auto c = Config::parse("[study]\nepsilons = 0.1, 0.05, 0.025\n");
    EXPECT_THROW(rate_params_from_config(c), ConfigError);
    c = Config::parse("[study]\nepsilons = 0.1, 0.2, 0.025, 0.01\n");
    EXPECT_THROW(rate_params_from_config(c), ConfigError);
}

TEST(LemmaChecks, NonpositiveKappaSkipsDownstream) {
    const auto cfg = Config::parse("[domain]\nmodes = 4\n[model]\nfixture = linear_ou\ngamma = 1.2\n");
    const auto rows = run_lemma_checks(cfg, 1, 1);
    ASSERT_GT(rows.size(), 3u);
    EXPECT_EQ(rows[0].check, "dissipativity_kappa");
    EXPECT_EQ(rows[0].verdict, "fail");
    for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_EQ(rows[i].verdict, "skipped: kappa nonpositive") << rows[i].check;
}

TEST(Validate, ReportLines) {
    const auto cfg = Config::parse("[domain]\nmodes = 4\n");
    const auto sys = system_from_config(cfg);
    const auto r = validate_assumptions(sys.coefficients, sys.noise, 4, NoiseStream(1, {0, 0, Channel::Probe}));
    const auto txt = assumption_report_text(r, sys.coefficients);
    EXPECT_NE(txt.find("kappa=0.75"), std::string::npos);
    EXPECT_NE(txt.find("violations=0\n"), std::string::npos);
}
