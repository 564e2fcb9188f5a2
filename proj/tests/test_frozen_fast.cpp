#include <spdeavg/frozen_fast.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <thread>

using namespace spdeavg;
constexpr double pi = std::numbers::pi;

namespace {

struct Setup {
    NoiseSpec noise;
    CoefficientSet coef;
};

Setup linear(std::size_t n, double gamma = 0.5) {
    auto noise = make_noise_spec(DecayProfile::polynomial(1.0, 2.0), n);
    auto coef = make_linear_ou({gamma, 0.1, 0.5}, n, pi, 0.5);
    return {noise, coef};
}

Setup nonlinear(std::size_t n) {
    auto noise = make_noise_spec(DecayProfile::polynomial(1.0, 2.0), n);
    auto coef = make_bounded_nonlinear(1.0, 0.5, 0.1, 0.5, n, pi, noise);
    return {noise, coef};
}

DriftBudget budget(double horizon, double burn = 10.0) {
    DriftBudget b;
    b.burn_in = burn;
    b.horizon = horizon;
    b.dt = 0.01;
    b.batches = 20;
    return b;
}

} // namespace

TEST(IntegrateFrozen, PureHeatDecay) {
    const auto c = make_zero_coefficients(4, pi);
    const auto noise = make_noise_spec(DecayProfile::polynomial(1.0, 2.0), 4);
    const double T = std::log(2.0);
    const auto tr = integrate_frozen(SpectralField::zeros(4, pi), SpectralField::mode(1, 1.0, 4, pi), T, T / 100, c, noise,
                                     NoiseStream(1, {0, 0, Channel::Frozen}));
    EXPECT_NEAR(tr.y.back()[1], 0.5, 1e-14);
    EXPECT_THROW(integrate_frozen(SpectralField::zeros(4, pi), SpectralField::zeros(4, pi), 1.0, 0.3, c, noise,
                                  NoiseStream(1, {0, 0, Channel::Frozen})),
                 ConfigError);
}

TEST(IntegrateFrozen, LinearOuMeanAndVariance) {
    auto [noise, c] = linear(4);
    const auto x = SpectralField::mode(1, 1.0, 4, pi);
    const Functional phi = [](const SpectralField& y) {
        return std::vector<double>{y[1], y[2], y[1] * y[1], y[2] * y[2]};
    };
    const auto e = estimate_invariant_mean(x, phi, c, noise, budget(2010.0), NoiseStream(2, {0, 0, Channel::Frozen}));
    const double a1 = 1.5, a2 = 4.5;
    const double m1 = 1.0 / a1;
    EXPECT_NEAR(e.value[1], m1, 3 * e.mode_stderr[0]);
    EXPECT_NEAR(e.value[2], 0.0, 3 * e.mode_stderr[1]);
    // E y^2 = mean^2 + lambda sigma2^2 / (2 (alpha + gamma))
    EXPECT_NEAR(e.value[3], m1 * m1 + 0.25 / (2 * a1), 3 * e.mode_stderr[2]);
    EXPECT_NEAR(e.value[4], 0.25 * 0.25 / (2 * a2), 3 * e.mode_stderr[3]);
}

TEST(EstimateAvgDrift, LinearOuModeOne) {
    auto [noise, c] = linear(16);
    const auto x = SpectralField::mode(1, 1.0, 16, pi);
    const auto e = estimate_avg_drift(x, c, noise, DriftBudget::defaults(0.75), NoiseStream(3, {0, 0, Channel::Drift}));
    EXPECT_NEAR(e.value[1], 2.0 / 3.0, 3 * e.mode_stderr[0]);
    EXPECT_GE(e.stderr, 0.0);
    EXPECT_GT(e.horizon, e.burn_in);
    EXPECT_LT(e.stderr, 0.02 * 1.0 + 1e-3);
}

TEST(EstimateAvgDrift, ZeroInputSymmetric) {
    auto [noise, c] = linear(8);
    const auto e = estimate_avg_drift(SpectralField::zeros(8, pi), c, noise, budget(1010.0),
                                      NoiseStream(4, {0, 0, Channel::Drift}));
    for (std::size_t k = 1; k <= 8; ++k) EXPECT_NEAR(e.value[k], 0.0, 3 * e.mode_stderr[k - 1]) << k;
}

TEST(EstimateAvgDrift, IntegrandIndependentOfY) {
    auto [noise, c] = linear(4);
    c.f = [](const SpectralField& x, const SpectralField&) { return 2.0 * x; };
    const SpectralField x({0.3, -0.1, 0.0, 1.0}, pi);
    for (auto m : {DriftBudget::Method::TimeAverage, DriftBudget::Method::Ensemble}) {
        auto b = budget(50.0, 1.0);
        b.method = m;
        b.replicas = 8;
        b.terminal = 1.0;
        const auto e = estimate_avg_drift(x, c, noise, b, NoiseStream(5, {0, 0, Channel::Drift}));
        for (std::size_t k = 1; k <= 4; ++k) EXPECT_NEAR(e.value[k], 2.0 * x[k], 1e-14);
        EXPECT_LT(e.stderr, 1e-14);
    }
}

TEST(EstimateAvgDrift, HorizonMustExceedBurnIn) {
    auto [noise, c] = linear(4);
    EXPECT_THROW(estimate_avg_drift(SpectralField::zeros(4, pi), c, noise, budget(10.0, 10.0),
                                    NoiseStream(5, {0, 0, Channel::Drift})),
                 ConfigError);
}

TEST(EstimateAvgDrift, EnsembleAgreesWithTimeAverage) {
    for (bool lin : {true, false}) {
        auto [noise, c] = lin ? linear(8) : nonlinear(8);
        const auto x = SpectralField::mode(1, 1.0, 8, pi);
        const auto ta = estimate_avg_drift(x, c, noise, budget(1010.0), NoiseStream(6, {0, 0, Channel::Drift}));
        auto eb = budget(0.0);
        eb.method = DriftBudget::Method::Ensemble;
        eb.replicas = 400;
        eb.terminal = 15.0;
        const auto en = estimate_avg_drift(x, c, noise, eb, NoiseStream(7, {0, 0, Channel::Drift}));
        const double gap = sobolev_norm(ta.value - en.value, 0.0);
        EXPECT_LE(gap, 3.0 * std::hypot(ta.stderr, en.stderr)) << (lin ? "linear" : "nonlinear");
    }
}

TEST(ClosedFormAvgDrift, Examples) {
    auto [noise, c] = linear(4);
    EXPECT_EQ(closed_form_avg_drift(SpectralField::zeros(4, pi), c), SpectralField::zeros(4, pi));
    EXPECT_NEAR(closed_form_avg_drift(SpectralField::mode(1, 1.0, 4, pi), c)[1], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(closed_form_avg_drift(SpectralField::mode(2, 1.0, 4, pi), c)[2], 2.0 / 9.0, 1e-15);
    const auto nl = nonlinear(4);
    EXPECT_THROW(closed_form_avg_drift(SpectralField::zeros(4, pi), nl.coef), UsageError);
}

TEST(EstimateMixing, LinearExponent) {
    auto [noise, c] = linear(8);
    const auto rep = estimate_mixing(SpectralField::mode(1, 1.0, 8, pi), SpectralField::mode(1, 1.0, 8, pi),
                                     SpectralField::mode(1, -1.0, 8, pi), 4.0, 0.01, 4, c, noise,
                                     NoiseStream(8, {0, 0, Channel::Frozen}));
    EXPECT_FALSE(rep.fully_contracted);
    EXPECT_GE(rep.exponent, 2.85);
    EXPECT_LE(rep.exponent, 3.15);
}

TEST(EstimateMixing, NonlinearAtLeastKappa) {
    auto [noise, c] = nonlinear(8);
    const double kappa = dissipativity_margin(c);
    const auto rep = estimate_mixing(SpectralField::mode(1, 1.0, 8, pi), SpectralField::mode(1, 1.0, 8, pi),
                                     SpectralField::mode(2, -1.0, 8, pi), 4.0, 0.01, 8, c, noise,
                                     NoiseStream(9, {0, 0, Channel::Frozen}));
    EXPECT_GE(rep.exponent, kappa - 0.1);
}

TEST(EstimateMixing, IdenticalStartsFullyContracted) {
    auto [noise, c] = linear(4);
    const auto y = SpectralField::mode(1, 1.0, 4, pi);
    const auto rep = estimate_mixing(y, y, y, 1.0, 0.01, 2, c, noise, NoiseStream(8, {0, 0, Channel::Frozen}));
    EXPECT_TRUE(rep.fully_contracted);
    for (double d : rep.msd) EXPECT_EQ(d, 0.0);
}

TEST(FirstVariation, ZeroDirection) {
    auto [noise, c] = nonlinear(4);
    const auto fv = first_variation(SpectralField::mode(1, 1.0, 4, pi), SpectralField::zeros(4, pi),
                                    SpectralField::zeros(4, pi), 1.0, 0.01, 2, c, noise, NoiseStream(1, {0, 0, Channel::Frozen}));
    EXPECT_EQ(fv.sup_mean_sq, 0.0);
}

TEST(FirstVariation, LinearSteadyStateAndScaling) {
    auto [noise, c] = linear(4);
    std::vector<double> ratios;
    for (double s : {0.1, 1.0, 10.0}) {
        const auto h = SpectralField::mode(1, s, 4, pi);
        const auto fv = first_variation(SpectralField::zeros(4, pi), SpectralField::zeros(4, pi), h, 20.0, 0.01, 4, c, noise,
                                        NoiseStream(1, {0, 0, Channel::Frozen}));
        EXPECT_NEAR(fv.terminal_mean[0], s / 1.5, 3 * fv.terminal_stderr[0] + 1e-10 * s);
        ratios.push_back(fv.sup_mean_sq / (s * s));
    }
    EXPECT_NEAR(ratios[0], ratios[2], 0.05 * ratios[2]);
    EXPECT_NEAR(ratios[1], ratios[2], 0.05 * ratios[2]);
}

TEST(FirstVariation, MissingDerivativesIsConfigError) {
    auto [noise, c] = linear(4);
    c.g_dx = nullptr;
    EXPECT_THROW(first_variation(SpectralField::zeros(4, pi), SpectralField::zeros(4, pi), SpectralField::zeros(4, pi), 1.0,
                                 0.01, 1, c, noise, NoiseStream(1, {0, 0, Channel::Frozen})),
                 ConfigError);
}

TEST(FirstVariation, NonlinearBoundedRatio) {
    auto [noise, c] = nonlinear(8);
    std::vector<double> ratios;
    for (double s : {0.1, 1.0, 10.0}) {
        const auto fv = first_variation(SpectralField::mode(1, 1.0, 8, pi), SpectralField::zeros(8, pi),
                                        SpectralField::mode(1, s, 8, pi), 10.0, 0.01, 16, c, noise,
                                        NoiseStream(2, {0, 0, Channel::Frozen}));
        ratios.push_back(fv.sup_mean_sq / (s * s));
    }
    for (double r : ratios) {
        EXPECT_TRUE(std::isfinite(r));
        EXPECT_NEAR(r, ratios[1], 0.05 * ratios[1]);
    }
}

TEST(DriftRelaxation, PositiveExponent) {
    for (bool lin : {true, false}) {
        auto [noise, c] = lin ? linear(8) : nonlinear(8);
        const auto x = SpectralField::mode(1, 1.0, 8, pi);
        const auto fbar = lin ? closed_form_avg_drift(x, c)
                              : estimate_avg_drift(x, c, noise, budget(1010.0), NoiseStream(3, {0, 0, Channel::Drift})).value;
        const auto rel = estimate_drift_relaxation(x, SpectralField::zeros(8, pi), fbar, 4.0, 0.01, 256, c, noise,
                                                   NoiseStream(4, {0, 0, Channel::Frozen}), 10);
        EXPECT_GT(rel.exponent, 0.0) << (lin ? "linear" : "nonlinear");
        if (lin) {
            EXPECT_NEAR(rel.exponent, 1.5, 0.3);
        }
    }
}

TEST(DriftMemo, QuantizesAndIsThreadSafe) {
    DriftMemo memo(1e-6);
    const SpectralField a({0.1000000001, 0.2}, pi), b({0.1, 0.2000000002}, pi);
    EXPECT_EQ(memo.quantize(a), memo.quantize(b));
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t)
        ts.emplace_back([&memo, t] {
            for (int i = 0; i < 200; ++i) {
                const SpectralField x({static_cast<double>(i) * 1e-3, 0.0}, pi);
                AveragedDriftEstimate e;
                e.value = x;
                memo.store(memo.quantize(x), e);
                (void)t;
                EXPECT_TRUE(memo.find(memo.quantize(x)).has_value());
            }
        });
    for (auto& t : ts) t.join();
    EXPECT_EQ(memo.size(), 200u);
}
