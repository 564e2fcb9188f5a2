#pragma once

/**
 * @brief Coefficients f, g, sigma, b of the slow-fast system, the declared
 * constants of the structural assumptions, and built-in fixtures.
 *
 * Diffusions are diagonal in the sine basis: sigma(x) and b(x, y) return one
 * multiplier per mode, so the Hilbert-Schmidt norm ||b||_{Q}^2 reduces to
 * sum_k lambda_k m_k^2.
 */

#include "errors.hpp"
#include "noise.hpp"
#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spdeavg {

using FieldMap = std::function<SpectralField(const SpectralField& x, const SpectralField& y)>;
using SlowMultiplier = std::function<std::vector<double>(const SpectralField& x)>;
using FastMultiplier = std::function<std::vector<double>(const SpectralField& x, const SpectralField& y)>;
/// Directional derivative of a field map at (x, y) along h.
using FieldDerivative = std::function<SpectralField(const SpectralField& x, const SpectralField& y, const SpectralField& h)>;
/// Directional derivative of diagonal multipliers at (x, y) along h.
using MultiplierDerivative =
    std::function<std::vector<double>(const SpectralField& x, const SpectralField& y, const SpectralField& h)>;

struct DeclaredConstants {
    double L_f = 0.0;
    double M_f = 0.0; // bound on ||f||; +inf when f is unbounded
    double C_g = 0.0;
    double L_g = 0.0;
    double C_b = 0.0;
    double L_b = 0.0;
    double L_sigma = 0.0;
};

/// Parameters of the linear Ornstein-Uhlenbeck fixture; presence enables closed forms.
struct OuParameters {
    double gamma = 0.5;
    double sigma1 = 0.1;
    double sigma2 = 0.5;
};

struct CoefficientSet {
    std::string name;
    std::size_t n_modes = 0;
    double length = 1.0;

    FieldMap f;
    FieldMap g;
    SlowMultiplier sigma;
    FastMultiplier b;

    // Derivatives used by the first-variation process; optional.
    FieldDerivative g_dx, g_dy;
    MultiplierDerivative b_dx, b_dy;

    DeclaredConstants constants;
    std::optional<OuParameters> ou;

    bool has_derivatives() const noexcept { return g_dx && g_dy && b_dx && b_dy; }
};

using FixtureParams = std::map<std::string, double>;

namespace detail {

inline double param(const FixtureParams& p, const std::string& key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

inline double max_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

inline SpectralField map_pointwise(const SineBasis& basis, const SpectralField& u, const std::function<double(double)>& fn) {
    auto vals = basis.synthesize(u);
    for (double& v : vals) v = fn(v);
    return SpectralField::unchecked(basis.project_values(vals), u.domain_length());
}

inline double sech2(double v) {
    const double c = std::cosh(v);
    return 1.0 / (c * c);
}

} // namespace detail

/**
 * @brief linear_ou(gamma, sigma1, sigma2): f(x,y) = y, g(x,y) = -gamma y + x,
 * constant diagonal diffusions.
 *
 * The declared L_b defaults to sigma2 (override with param "L_b"). f is
 * unbounded, so M_f is +inf; this fixture exists for its closed forms.
 */
inline CoefficientSet make_linear_ou(const OuParameters& p, std::size_t n_modes, double length, double declared_lb) {
    CoefficientSet c;
    c.name = "linear_ou";
    c.n_modes = n_modes;
    c.length = length;
    const double gamma = p.gamma;
    c.f = [](const SpectralField&, const SpectralField& y) { return y; };
    c.g = [gamma](const SpectralField& x, const SpectralField& y) {
        std::vector<double> out(y.n_modes());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = -gamma * y.coeffs()[i] + x.coeffs()[i];
        return SpectralField::unchecked(std::move(out), y.domain_length());
    };
    const double s1 = p.sigma1, s2 = p.sigma2;
    c.sigma = [s1, n_modes](const SpectralField&) { return std::vector<double>(n_modes, s1); };
    c.b = [s2, n_modes](const SpectralField&, const SpectralField&) { return std::vector<double>(n_modes, s2); };
    c.g_dx = [](const SpectralField&, const SpectralField&, const SpectralField& h) { return h; };
    c.g_dy = [gamma](const SpectralField&, const SpectralField&, const SpectralField& h) { return -gamma * h; };
    c.b_dx = [n_modes](const SpectralField&, const SpectralField&, const SpectralField&) {
        return std::vector<double>(n_modes, 0.0);
    };
    c.b_dy = c.b_dx;
    c.constants = {.L_f = 1.0,
                   .M_f = std::numeric_limits<double>::infinity(),
                   .C_g = 1.0,
                   .L_g = std::abs(gamma),
                   .C_b = 0.0,
                   .L_b = declared_lb,
                   .L_sigma = 0.0};
    c.ou = p;
    return c;
}

/**
 * @brief bounded_nonlinear(a, gamma): Nemytskii maps on the collocation grid.
 *
 * f = a tanh(x + y) pointwise, g = -gamma y + tanh(x) pointwise,
 * sigma_k(x) = s1 (1 + tanh(x_k) / 2), b_k(x, y) = s2 (1 + tanh(x_k + y_k) / 2).
 */
inline CoefficientSet make_bounded_nonlinear(double a, double gamma, double s1, double s2, std::size_t n_modes,
                                             double length, const NoiseSpec& noise) {
    CoefficientSet c;
    c.name = "bounded_nonlinear";
    c.n_modes = n_modes;
    c.length = length;
    auto basis = std::make_shared<const SineBasis>(n_modes, length);

    c.f = [basis, a](const SpectralField& x, const SpectralField& y) {
        auto xv = basis->synthesize(x);
        const auto yv = basis->synthesize(y);
        for (std::size_t j = 0; j < xv.size(); ++j) xv[j] = a * std::tanh(xv[j] + yv[j]);
        return SpectralField::unchecked(basis->project_values(xv), x.domain_length());
    };
    c.g = [basis, gamma](const SpectralField& x, const SpectralField& y) {
        auto out = detail::map_pointwise(*basis, x, [](double v) { return std::tanh(v); });
        std::vector<double> v(out.values());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= gamma * y.coeffs()[i];
        return SpectralField::unchecked(std::move(v), x.domain_length());
    };
    c.sigma = [s1](const SpectralField& x) {
        std::vector<double> m(x.n_modes());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = s1 * (1.0 + 0.5 * std::tanh(x.coeffs()[i]));
        return m;
    };
    c.b = [s2](const SpectralField& x, const SpectralField& y) {
        std::vector<double> m(x.n_modes());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = s2 * (1.0 + 0.5 * std::tanh(x.coeffs()[i] + y.coeffs()[i]));
        return m;
    };
    c.g_dx = [basis](const SpectralField& x, const SpectralField&, const SpectralField& h) {
        auto xv = basis->synthesize(x);
        const auto hv = basis->synthesize(h);
        for (std::size_t j = 0; j < xv.size(); ++j) xv[j] = detail::sech2(xv[j]) * hv[j];
        return SpectralField::unchecked(basis->project_values(xv), x.domain_length());
    };
    c.g_dy = [gamma](const SpectralField&, const SpectralField&, const SpectralField& h) { return -gamma * h; };
    c.b_dx = [s2](const SpectralField& x, const SpectralField& y, const SpectralField& h) {
        std::vector<double> m(x.n_modes());
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] = 0.5 * s2 * detail::sech2(x.coeffs()[i] + y.coeffs()[i]) * h.coeffs()[i];
        return m;
    };
    c.b_dy = c.b_dx;

    const double sqrt_l1 = std::sqrt(detail::max_of(noise.lambda1()));
    const double sqrt_l2 = std::sqrt(detail::max_of(noise.lambda2()));
    c.constants = {.L_f = std::abs(a),
                   .M_f = std::abs(a) * std::sqrt(length),
                   .C_g = 1.0,
                   .L_g = std::abs(gamma),
                   .C_b = 0.5 * std::abs(s2) * sqrt_l2,
                   .L_b = 0.5 * std::abs(s2) * sqrt_l2,
                   .L_sigma = 0.5 * std::abs(s1) * sqrt_l1};
    return c;
}

/// Builds a named fixture. Names: linear_ou, bounded_nonlinear.
inline CoefficientSet make_fixture(const std::string& name, const FixtureParams& params, std::size_t n_modes,
                                   double length, const NoiseSpec& noise) {
    if (name == "linear_ou") {
        OuParameters p{detail::param(params, "gamma", 0.5), detail::param(params, "sigma1", 0.1),
                       detail::param(params, "sigma2", 0.5)};
        return make_linear_ou(p, n_modes, length, detail::param(params, "L_b", p.sigma2));
    }
    if (name == "bounded_nonlinear") {
        return make_bounded_nonlinear(detail::param(params, "a", 1.0), detail::param(params, "gamma", 0.5),
                                      detail::param(params, "sigma1", 0.1), detail::param(params, "sigma2", 0.5),
                                      n_modes, length, noise);
    }
    throw ConfigError("unknown fixture '" + name + "'", "model.fixture");
}

/// All-zero coefficients (free wave + heat flow).
inline CoefficientSet make_zero_coefficients(std::size_t n_modes, double length) {
    CoefficientSet c;
    c.name = "zero";
    c.n_modes = n_modes;
    c.length = length;
    c.f = [](const SpectralField& x, const SpectralField&) { return SpectralField::zeros(x.n_modes(), x.domain_length()); };
    c.g = c.f;
    c.sigma = [n_modes](const SpectralField&) { return std::vector<double>(n_modes, 0.0); };
    c.b = [n_modes](const SpectralField&, const SpectralField&) { return std::vector<double>(n_modes, 0.0); };
    c.g_dx = [](const SpectralField& x, const SpectralField&, const SpectralField&) {
        return SpectralField::zeros(x.n_modes(), x.domain_length());
    };
    c.g_dy = c.g_dx;
    c.b_dx = [n_modes](const SpectralField&, const SpectralField&, const SpectralField&) {
        return std::vector<double>(n_modes, 0.0);
    };
    c.b_dy = c.b_dx;
    return c;
}

/// Empirical constants measured by probing, same meaning as DeclaredConstants.
struct EstimatedConstants {
    double L_f = 0.0;
    double M_f = 0.0;
    double C_g = 0.0;
    double L_g = 0.0;
    double C_b = 0.0;
    double L_b = 0.0;
    double L_sigma = 0.0;
};

struct AssumptionReport {
    double kappa = 0.0;
    bool fatal = false;
    EstimatedConstants estimated;
    std::vector<std::string> violations;
    std::vector<std::string> notes;
};

/// kappa = 2 alpha_1 - 2 L_g - L_b^2 from declared constants.
inline double dissipativity_margin(const CoefficientSet& c) {
    return 2.0 * eigenvalue(1, c.length) - 2.0 * c.constants.L_g - c.constants.L_b * c.constants.L_b;
}

namespace detail {

inline SpectralField random_field(NoiseStream& s, std::size_t n, double length, double scale) {
    std::vector<double> v(n);
    for (double& c : v) c = scale * s.normal();
    return SpectralField(std::move(v), length);
}

inline SpectralField unit_direction(NoiseStream& s, std::size_t n, double length) {
    for (;;) {
        auto h = random_field(s, n, length, 1.0);
        const double nrm = sobolev_norm(h, 0.0);
        if (nrm > 1e-8) return (1.0 / nrm) * h;
    }
}

inline double q_norm(const std::vector<double>& m, const std::vector<double>& lambda) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) acc += lambda[k] * m[k] * m[k];
    return std::sqrt(acc);
}

inline std::vector<double> diff_scaled(const std::vector<double>& a, const std::vector<double>& b, double inv) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = (a[i] - b[i]) * inv;
    return d;
}

} // namespace detail

/**
 * @brief Checks the declared constants against central finite differences at
 * random probe points. A declared constant more than 5% below its empirical
 * estimate is a violation; kappa <= 0 is fatal.
 */
inline AssumptionReport validate_assumptions(const CoefficientSet& c, const NoiseSpec& noise, std::size_t probes,
                                             NoiseStream stream) {
    if (probes == 0) throw DomainError("validate_assumptions: need at least one probe");
    if (noise.n_modes() != c.n_modes) throw ConfigError("noise spectrum length does not match mode count", "noise");
    constexpr double fd = 1e-6;
    constexpr double tol = 0.05;
    const std::size_t n = c.n_modes;
    const double len = c.length;
    AssumptionReport rep;
    rep.kappa = dissipativity_margin(c);
    rep.fatal = !(rep.kappa > 0.0);
    auto& e = rep.estimated;
    for (std::size_t p = 0; p < probes; ++p) {
        const auto x = detail::random_field(stream, n, len, 1.0);
        const auto y = detail::random_field(stream, n, len, 1.0);
        const auto h = detail::unit_direction(stream, n, len);
        const auto xp = x + fd * h, xm = x - fd * h, yp = y + fd * h, ym = y - fd * h;
        const double inv = 1.0 / (2.0 * fd);

        e.M_f = std::max(e.M_f, sobolev_norm(c.f(x, y), 0.0));
        e.L_f = std::max(e.L_f, inv * sobolev_norm(c.f(xp, y) - c.f(xm, y), 0.0));
        e.L_f = std::max(e.L_f, inv * sobolev_norm(c.f(x, yp) - c.f(x, ym), 0.0));
        e.C_g = std::max(e.C_g, inv * sobolev_norm(c.g(xp, y) - c.g(xm, y), 0.0));
        e.L_g = std::max(e.L_g, inv * sobolev_norm(c.g(x, yp) - c.g(x, ym), 0.0));
        e.C_b = std::max(e.C_b, detail::q_norm(detail::diff_scaled(c.b(xp, y), c.b(xm, y), inv), noise.lambda2()));
        e.L_b = std::max(e.L_b, detail::q_norm(detail::diff_scaled(c.b(x, yp), c.b(x, ym), inv), noise.lambda2()));
        e.L_sigma = std::max(e.L_sigma, detail::q_norm(detail::diff_scaled(c.sigma(xp), c.sigma(xm), inv), noise.lambda1()));
    }
    const auto& d = c.constants;
    auto check = [&](const char* name, double declared, double measured) {
        if (measured > declared * (1.0 + tol) + 1e-12)
            rep.violations.push_back(std::string(name) + " declared " + std::to_string(declared) + " < measured " +
                                     std::to_string(measured));
    };
    check("L_f", d.L_f, e.L_f);
    check("M_f", d.M_f, e.M_f);
    check("C_g", d.C_g, e.C_g);
    check("L_g", d.L_g, e.L_g);
    check("C_b", d.C_b, e.C_b);
    check("L_b", d.L_b, e.L_b);
    check("L_sigma", d.L_sigma, e.L_sigma);
    if (std::isinf(d.M_f)) rep.notes.push_back("f is unbounded; boundedness of f is waived for this fixture");
    if (rep.fatal) rep.violations.push_back("kappa = " + std::to_string(rep.kappa) + " <= 0: fast equation not dissipative");
    return rep;
}

} // namespace spdeavg
