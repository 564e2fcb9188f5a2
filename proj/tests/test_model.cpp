#include <spdeavg/model.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace spdeavg;
constexpr double pi = std::numbers::pi;

namespace {
NoiseSpec default_noise(std::size_t n) { return make_noise_spec(DecayProfile::polynomial(1.0, 2.0), n); }
}

TEST(LinearOu, Coefficients) {
    const auto c = make_linear_ou({0.5, 0.1, 0.5}, 4, pi, 0.5);
    const SpectralField x({1.0, 0.0, 2.0, 0.0}, pi), y({0.5, -1.0, 0.0, 3.0}, pi);
    EXPECT_EQ(c.f(x, y), y);
    const auto g = c.g(x, y);
    EXPECT_DOUBLE_EQ(g[1], -0.25 + 1.0);
    EXPECT_DOUBLE_EQ(g[4], -1.5);
    EXPECT_EQ(c.sigma(x)[2], 0.1);
    EXPECT_EQ(c.b(x, y)[3], 0.5);
    EXPECT_TRUE(c.has_derivatives());
    EXPECT_TRUE(c.ou.has_value());
}

TEST(LinearOu, KappaDefault) {
    const auto c = make_fixture("linear_ou", {}, 16, pi, default_noise(16));
    EXPECT_NEAR(dissipativity_margin(c), 0.75, 1e-12);
}

TEST(BoundedNonlinear, KappaAndBound) {
    const auto noise = default_noise(16);
    const auto c = make_fixture("bounded_nonlinear", {{"a", 1.0}, {"gamma", 0.5}}, 16, pi, noise);
    EXPECT_NEAR(dissipativity_margin(c), 0.9375, 1e-12);
    NoiseStream s(1, {0, 0, Channel::Probe});
    for (int i = 0; i < 20; ++i) {
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = 3.0 * s.normal();
        for (auto& v : b) v = 3.0 * s.normal();
        const auto f = c.f(SpectralField(a, pi), SpectralField(b, pi));
        EXPECT_LE(sobolev_norm(f, 0.0), c.constants.M_f + 1e-12);
    }
}

TEST(BoundedNonlinear, DerivativesMatchFiniteDifferences) {
    const auto noise = default_noise(8);
    const auto c = make_bounded_nonlinear(1.0, 0.5, 0.1, 0.5, 8, pi, noise);
    const SpectralField x({0.3, -0.2, 0.5, 0.0, 0.1, 0.0, -0.4, 0.2}, pi);
    const SpectralField y({-0.1, 0.4, 0.0, 0.3, 0.0, -0.2, 0.1, 0.0}, pi);
    const SpectralField h({1.0, 0.5, -0.3, 0.2, 0.0, 0.1, 0.0, -0.2}, pi);
    const double e = 1e-6;
    const auto gx = c.g_dx(x, y, h);
    const auto gx_fd = (1.0 / (2 * e)) * (c.g(x + e * h, y) - c.g(x - e * h, y));
    const auto gy = c.g_dy(x, y, h);
    const auto gy_fd = (1.0 / (2 * e)) * (c.g(x, y + e * h) - c.g(x, y - e * h));
    const auto bx = c.b_dx(x, y, h);
    const auto bp = c.b(x + e * h, y), bm = c.b(x - e * h, y);
    const auto by = c.b_dy(x, y, h);
    const auto bpy = c.b(x, y + e * h), bmy = c.b(x, y - e * h);
    for (std::size_t k = 1; k <= 8; ++k) {
        EXPECT_NEAR(gx[k], gx_fd[k], 1e-8);
        EXPECT_NEAR(gy[k], gy_fd[k], 1e-8);
        EXPECT_NEAR(bx[k - 1], (bp[k - 1] - bm[k - 1]) / (2 * e), 1e-8);
        EXPECT_NEAR(by[k - 1], (bpy[k - 1] - bmy[k - 1]) / (2 * e), 1e-8);
    }
}

TEST(Fixtures, UnknownNameIsConfigError) {
    try {
        make_fixture("nope", {}, 4, 1.0, default_noise(4));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "model.fixture");
    }
}

TEST(ValidateAssumptions, LinearOuClean) {
    const auto noise = default_noise(16);
    const auto c = make_fixture("linear_ou", {}, 16, pi, noise);
    const auto r = validate_assumptions(c, noise, 16, NoiseStream(1, {0, 0, Channel::Probe}));
    EXPECT_FALSE(r.fatal);
    EXPECT_TRUE(r.violations.empty());
    EXPECT_EQ(r.notes.size(), 1u);
    EXPECT_NEAR(r.estimated.L_g, 0.5, 1e-6);
    EXPECT_NEAR(r.estimated.C_g, 1.0, 1e-6);
}

TEST(ValidateAssumptions, BoundedNonlinearClean) {
    const auto noise = default_noise(16);
    const auto c = make_fixture("bounded_nonlinear", {}, 16, pi, noise);
    const auto r = validate_assumptions(c, noise, 32, NoiseStream(2, {0, 0, Channel::Probe}));
    EXPECT_FALSE(r.fatal);
    EXPECT_TRUE(r.violations.empty()) << (r.violations.empty() ? "" : r.violations.front());
}

TEST(ValidateAssumptions, UnderstatedConstantIsFlagged) {
    const auto noise = default_noise(8);
    auto c = make_fixture("linear_ou", {{"gamma", 0.5}}, 8, pi, noise);
    c.constants.L_g = 0.1;
    const auto r = validate_assumptions(c, noise, 4, NoiseStream(3, {0, 0, Channel::Probe}));
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_NE(r.violations.front().find("L_g"), std::string::npos);
}

TEST(ValidateAssumptions, NonpositiveKappaIsFatal) {
    const auto noise = default_noise(8);
    const auto c = make_fixture("linear_ou", {{"gamma", 1.2}}, 8, pi, noise);
    const auto r = validate_assumptions(c, noise, 4, NoiseStream(4, {0, 0, Channel::Probe}));
    EXPECT_LE(r.kappa, 0.0);
    EXPECT_TRUE(r.fatal);
}

TEST(ZeroCoefficients, AllZero) {
    const auto c = make_zero_coefficients(3, 1.0);
    const SpectralField x({1.0, 2.0, 3.0}, 1.0);
    EXPECT_EQ(c.f(x, x), SpectralField::zeros(3, 1.0));
    EXPECT_EQ(c.sigma(x), std::vector<double>(3, 0.0));
}
