#pragma once

/**
 * @brief Dirichlet sine eigenbasis on (0, L), Sobolev norms and the linear
 * heat / wave flows diagonal in that basis.
 *
 * Mode k (1-based) has eigenfunction e_k(xi) = sqrt(2/L) sin(k pi xi / L)
 * and eigenvalue alpha_k = (k pi / L)^2 of -Laplacian.
 */

#include "errors.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spdeavg {

inline double eigenvalue(std::size_t k, double length) {
    if (k == 0) throw DomainError("eigenvalue: mode index must be >= 1");
    if (!(length > 0.0)) throw DomainError("eigenvalue: domain length must be positive");
    const double w = static_cast<double>(k) * std::numbers::pi / length;
    return w * w;
}

/// Truncated Galerkin field: coefficients u_1..u_N in the sine basis on (0, L).
class SpectralField {
public:
    SpectralField() = default;

    SpectralField(std::vector<double> coeffs, double length) : coeffs_(std::move(coeffs)), length_(length) {
        if (coeffs_.empty()) throw DomainError("SpectralField: need at least one mode");
        if (!(length_ > 0.0) || !std::isfinite(length_)) throw DomainError("SpectralField: length must be positive");
        for (double c : coeffs_)
            if (!std::isfinite(c)) throw DomainError("SpectralField: non-finite coefficient");
    }

    static SpectralField zeros(std::size_t n_modes, double length) {
        return SpectralField(std::vector<double>(n_modes, 0.0), length);
    }

    /// Single mode k (1-based) with the given coefficient.
    static SpectralField mode(std::size_t k, double coefficient, std::size_t n_modes, double length) {
        if (k == 0 || k > n_modes) throw DomainError("SpectralField::mode: index out of range");
        std::vector<double> c(n_modes, 0.0);
        c[k - 1] = coefficient;
        return SpectralField(std::move(c), length);
    }

    std::size_t n_modes() const noexcept { return coeffs_.size(); }
    double domain_length() const noexcept { return length_; }
    std::span<const double> coeffs() const noexcept { return coeffs_; }
    const std::vector<double>& values() const noexcept { return coeffs_; }

    /// Coefficient of mode k, 1-based.
    double operator[](std::size_t k) const { return coeffs_.at(k - 1); }

    bool all_finite() const noexcept {
        for (double c : coeffs_)
            if (!std::isfinite(c)) return false;
        return true;
    }

    bool same_basis(const SpectralField& o) const noexcept {
        return coeffs_.size() == o.coeffs_.size() && length_ == o.length_;
    }

    SpectralField& operator+=(const SpectralField& o) {
        require_same_basis(o);
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o) {
        require_same_basis(o);
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
        return *this;
    }
    SpectralField& operator*=(double s) {
        for (double& c : coeffs_) c *= s;
        return *this;
    }

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
    friend bool operator==(const SpectralField&, const SpectralField&) = default;

    /// Builds a field without the finiteness check; used by integrators that
    /// check finiteness themselves and report the step index.
    static SpectralField unchecked(std::vector<double> coeffs, double length) {
        SpectralField f;
        f.coeffs_ = std::move(coeffs);
        f.length_ = length;
        return f;
    }

private:
    void require_same_basis(const SpectralField& o) const {
        if (!same_basis(o)) throw DomainError("SpectralField: basis mismatch");
    }

    std::vector<double> coeffs_;
    double length_ = 1.0;
};

/// Eigenvalues alpha_1..alpha_N for a field's basis.
inline std::vector<double> eigenvalues(std::size_t n_modes, double length) {
    std::vector<double> a(n_modes);
    for (std::size_t k = 1; k <= n_modes; ++k) a[k - 1] = eigenvalue(k, length);
    return a;
}

inline double sobolev_norm_squared(const SpectralField& u, double s) {
    double acc = 0.0;
    const auto c = u.coeffs();
    for (std::size_t k = 1; k <= c.size(); ++k) {
        const double w = s == 0.0 ? 1.0 : std::pow(eigenvalue(k, u.domain_length()), s);
        acc += w * c[k - 1] * c[k - 1];
    }
    return acc;
}

/// ||u||_s = (sum_k alpha_k^s u_k^2)^(1/2).
inline double sobolev_norm(const SpectralField& u, double s) { return std::sqrt(sobolev_norm_squared(u, s)); }

inline double inner(const SpectralField& a, const SpectralField& b) {
    if (!a.same_basis(b)) throw DomainError("inner: basis mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.n_modes(); ++i) acc += a.coeffs()[i] * b.coeffs()[i];
    return acc;
}

/// Heat semigroup G_t: mode-wise multiplication by exp(-alpha_k t).
inline SpectralField apply_heat_semigroup(const SpectralField& u, double t) {
    if (!(t >= 0.0)) throw DomainError("apply_heat_semigroup: t must be >= 0");
    std::vector<double> out(u.coeffs().begin(), u.coeffs().end());
    for (std::size_t k = 1; k <= out.size(); ++k) out[k - 1] *= std::exp(-eigenvalue(k, u.domain_length()) * t);
    return SpectralField(std::move(out), u.domain_length());
}

/// Displacement and velocity of the slow (wave) component.
struct WaveState {
    SpectralField position;
    SpectralField velocity;

    WaveState() = default;
    WaveState(SpectralField x, SpectralField v) : position(std::move(x)), velocity(std::move(v)) {
        if (!position.same_basis(velocity)) throw DomainError("WaveState: position and velocity bases differ");
    }

    std::size_t n_modes() const noexcept { return position.n_modes(); }
    double domain_length() const noexcept { return position.domain_length(); }

    friend bool operator==(const WaveState&, const WaveState&) = default;
};

/// ||velocity||^2 + ||position||_1^2.
inline double energy(const WaveState& w) {
    return sobolev_norm_squared(w.velocity, 0.0) + sobolev_norm_squared(w.position, 1.0);
}

/// Exact homogeneous wave flow over time t, any sign (t < 0 is the inverse rotation).
inline WaveState wave_rotation(const WaveState& w, double t) {
    const std::size_t n = w.n_modes();
    const double len = w.domain_length();
    std::vector<double> x(n), v(n);
    for (std::size_t k = 1; k <= n; ++k) {
        const double om = std::sqrt(eigenvalue(k, len));
        const double c = std::cos(om * t), s = std::sin(om * t);
        const double x0 = w.position.coeffs()[k - 1], v0 = w.velocity.coeffs()[k - 1];
        x[k - 1] = c * x0 + s / om * v0;
        v[k - 1] = -om * s * x0 + c * v0;
    }
    return {SpectralField(std::move(x), len), SpectralField(std::move(v), len)};
}

/// S'_t X0 + S_t V0 (and its time derivative): the free wave propagation.
inline WaveState apply_wave_propagator(const WaveState& w, double t) {
    if (!(t >= 0.0)) throw DomainError("apply_wave_propagator: t must be >= 0");
    return wave_rotation(w, t);
}

/// e_k(xi) = sqrt(2/L) sin(k pi xi / L).
inline double eigenfunction(std::size_t k, double length, double xi) {
    return std::sqrt(2.0 / length) * std::sin(static_cast<double>(k) * std::numbers::pi * xi / length);
}

/// Uniform interior collocation grid xi_j = j L / (N + 1), j = 1..N.
inline std::vector<double> collocation_grid(std::size_t n_modes, double length) {
    std::vector<double> g(n_modes);
    for (std::size_t j = 1; j <= n_modes; ++j)
        g[j - 1] = static_cast<double>(j) * length / static_cast<double>(n_modes + 1);
    return g;
}

/// Point values sum_k u_k e_k(xi) on an arbitrary grid in (0, L].
inline std::vector<double> evaluate(const SpectralField& u, std::span<const double> grid) {
    const double len = u.domain_length();
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double xi = grid[j];
        if (!(xi > 0.0 && xi <= len)) throw DomainError("evaluate: grid point outside (0, L]");
        double acc = 0.0;
        for (std::size_t k = 1; k <= u.n_modes(); ++k) acc += u.coeffs()[k - 1] * eigenfunction(k, len, xi);
        out[j] = acc;
    }
    return out;
}

/**
 * @brief Discrete sine transform pair on the collocation grid of size N.
 *
 * `synthesize` maps N coefficients to N grid values and `project` is its exact
 * inverse (DST-I is orthogonal up to the factor (N+1)/2). The transform matrix
 * is cached, which matters for Nemytskii maps evaluated every time step.
 */
class SineBasis {
public:
    SineBasis(std::size_t n_modes, double length) : n_(n_modes), length_(length), matrix_(n_modes * n_modes) {
        if (n_modes == 0) throw DomainError("SineBasis: need at least one mode");
        if (!(length > 0.0)) throw DomainError("SineBasis: length must be positive");
        const double norm = std::sqrt(2.0 / length);
        for (std::size_t j = 1; j <= n_; ++j)
            for (std::size_t k = 1; k <= n_; ++k)
                matrix_[(j - 1) * n_ + (k - 1)] =
                    norm * std::sin(std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n_ + 1));
        // project = (L / (N+1)) * M^T
        weight_ = length / static_cast<double>(n_ + 1);
    }

    std::size_t n_modes() const noexcept { return n_; }
    double domain_length() const noexcept { return length_; }
    std::vector<double> grid() const { return collocation_grid(n_, length_); }

    std::vector<double> synthesize(std::span<const double> coeffs) const {
        if (coeffs.size() != n_) throw DomainError("SineBasis::synthesize: size mismatch");
        std::vector<double> out(n_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            double acc = 0.0;
            const double* row = &matrix_[j * n_];
            for (std::size_t k = 0; k < n_; ++k) acc += row[k] * coeffs[k];
            out[j] = acc;
        }
        return out;
    }

    std::vector<double> synthesize(const SpectralField& u) const {
        require(u);
        return synthesize(u.coeffs());
    }

    std::vector<double> project_values(std::span<const double> samples) const {
        if (samples.size() != n_) throw DomainError("SineBasis::project: sample count must equal mode count");
        std::vector<double> out(n_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            const double* row = &matrix_[j * n_];
            const double s = samples[j] * weight_;
            for (std::size_t k = 0; k < n_; ++k) out[k] += row[k] * s;
        }
        return out;
    }

    SpectralField project(std::span<const double> samples) const {
        return SpectralField(project_values(samples), length_);
    }

private:
    void require(const SpectralField& u) const {
        if (u.n_modes() != n_ || u.domain_length() != length_) throw DomainError("SineBasis: field basis mismatch");
    }

    std::size_t n_;
    double length_;
    double weight_ = 1.0;
    std::vector<double> matrix_;
};

/// Inverse of `evaluate` on the uniform collocation grid with N = samples.size().
inline SpectralField project(std::span<const double> samples, double length) {
    return SineBasis(samples.size(), length).project(samples);
}

} // namespace spdeavg
