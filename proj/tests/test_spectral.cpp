#include <spdeavg/spectral.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace spdeavg;
constexpr double pi = std::numbers::pi;

TEST(Eigenvalue, UnitIntervalAndPi) {
    EXPECT_NEAR(eigenvalue(1, 1.0), pi * pi, 1e-12);
    EXPECT_NEAR(eigenvalue(3, pi), 9.0, 1e-12);
    EXPECT_NEAR(eigenvalue(2, 2.0), pi * pi, 1e-12);
}

TEST(Eigenvalue, RejectsBadInput) {
    EXPECT_THROW(eigenvalue(0, 1.0), DomainError);
    EXPECT_THROW(eigenvalue(1, 0.0), DomainError);
    EXPECT_THROW(eigenvalue(1, -1.0), DomainError);
}

TEST(SobolevNorm, ModeWeights) {
    const auto u = SpectralField::mode(2, 3.0, 4, pi);
    EXPECT_NEAR(sobolev_norm_squared(u, 0.0), 9.0, 1e-12);
    EXPECT_NEAR(sobolev_norm_squared(u, 1.0), 36.0, 1e-12);
    EXPECT_NEAR(sobolev_norm(u, 1.0), 6.0, 1e-12);
    EXPECT_NEAR(sobolev_norm_squared(u, 2.0), 144.0, 1e-12);
}

TEST(SobolevNorm, ZeroField) {
    EXPECT_EQ(sobolev_norm(SpectralField::zeros(8, 1.0), 1.0), 0.0);
}

TEST(HeatSemigroup, DecaysModeOne) {
    const auto u = SpectralField::mode(1, 1.0, 4, pi);
    const auto v = apply_heat_semigroup(u, std::log(2.0));
    EXPECT_NEAR(v[1], 0.5, 1e-14);
    EXPECT_THROW(apply_heat_semigroup(u, -1.0), DomainError);
}

TEST(HeatSemigroup, Contracts) {
    std::vector<double> c{1.0, -2.0, 0.5, 3.0};
    const SpectralField u(c, 1.3);
    for (double t : {0.0, 0.01, 0.3, 2.0})
        EXPECT_LE(sobolev_norm(apply_heat_semigroup(u, t), 0.0), sobolev_norm(u, 0.0) + 1e-15);
}

TEST(WavePropagator, QuarterPeriodRotation) {
    const WaveState w(SpectralField::mode(1, 1.0, 3, pi), SpectralField::zeros(3, pi));
    const auto r = apply_wave_propagator(w, pi / 2.0);
    EXPECT_NEAR(r.position[1], 0.0, 1e-14);
    EXPECT_NEAR(r.velocity[1], -1.0, 1e-14);
}

TEST(WavePropagator, ConservesEnergyAndComposes) {
    const WaveState w(SpectralField({0.3, -1.0, 0.2, 0.7}, 2.0), SpectralField({1.0, 0.1, -0.4, 0.0}, 2.0));
    const double e0 = energy(w);
    for (double t : {0.1, 1.7, 10.0}) EXPECT_NEAR(energy(apply_wave_propagator(w, t)), e0, 1e-12 * e0);
    const auto a = apply_wave_propagator(apply_wave_propagator(w, 0.4), 0.9);
    const auto b = apply_wave_propagator(w, 1.3);
    for (std::size_t k = 1; k <= 4; ++k) {
        EXPECT_NEAR(a.position[k], b.position[k], 1e-12);
        EXPECT_NEAR(a.velocity[k], b.velocity[k], 1e-12);
    }
    EXPECT_THROW(apply_wave_propagator(w, -0.1), DomainError);
}

TEST(SpectralField, Validation) {
    EXPECT_THROW(SpectralField({}, 1.0), DomainError);
    EXPECT_THROW(SpectralField({1.0}, 0.0), DomainError);
    EXPECT_THROW(SpectralField({NAN}, 1.0), DomainError);
    EXPECT_THROW(SpectralField::mode(5, 1.0, 4, 1.0), DomainError);
    EXPECT_THROW(SpectralField({1.0}, 1.0) + SpectralField({1.0, 2.0}, 1.0), DomainError);
    EXPECT_THROW(SpectralField({1.0}, 1.0) + SpectralField({1.0}, 2.0), DomainError);
}

TEST(SpectralField, Arithmetic) {
    const SpectralField a({1.0, 2.0}, 1.0), b({0.5, -1.0}, 1.0);
    const auto c = a - 2.0 * b;
    EXPECT_EQ(c[1], 0.0);
    EXPECT_EQ(c[2], 4.0);
    EXPECT_NEAR(inner(a, b), -1.5, 1e-15);
}

TEST(Collocation, GridAndEvaluation) {
    const auto g = collocation_grid(3, 2.0);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_NEAR(g[0], 0.5, 1e-15);
    EXPECT_NEAR(g[2], 1.5, 1e-15);
    const auto u = SpectralField::mode(1, 1.0, 3, 2.0);
    const auto v = evaluate(u, g);
    EXPECT_NEAR(v[1], 1.0, 1e-14);  // sqrt(2/2) sin(pi/2)
    const std::vector<double> outside{2.5};
    EXPECT_THROW(evaluate(u, outside), DomainError);
}

TEST(SineBasis, ProjectionInvertsSynthesis) {
    const std::size_t n = 16;
    const double len = pi;
    const SineBasis basis(n, len);
    std::vector<double> c(n);
    for (std::size_t k = 0; k < n; ++k) c[k] = std::sin(0.7 * static_cast<double>(k) + 0.2) / static_cast<double>(k + 1);
    const SpectralField u(c, len);
    const auto back = basis.project(basis.synthesize(u));
    for (std::size_t k = 1; k <= n; ++k) EXPECT_NEAR(back[k], u[k], 1e-13);
    const auto vals = basis.synthesize(u);
    const auto direct = evaluate(u, basis.grid());
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(vals[j], direct[j], 1e-13);
}

TEST(SineBasis, ProjectMatchesFreeFunction) {
    const std::vector<double> samples{0.1, -0.3, 0.8, 0.2, 0.0};
    const SineBasis basis(5, 1.5);
    const auto a = basis.project(samples);
    const auto b = project(samples, 1.5);
    for (std::size_t k = 1; k <= 5; ++k) EXPECT_NEAR(a[k], b[k], 1e-15);
}
