#pragma once

/**
 * @brief Time integration of the slow-fast system in mild form.
 *
 * Slow (wave) modes: exact rotation over dt plus a left-point kick
 * F = f dt + sigma dW^1 entering as (sin(w dt)/w F, cos(w dt) F).
 * Fast (heat) modes: exponential Euler with the exact OU convolution,
 *   y <- e^{-a h/eps} y + (1 - e^{-a h/eps}) / a * g + b / sqrt(eps) * conv,
 * coefficients frozen at the start of each (sub)step.
 *
 * The integrator also accumulates the right-hand sides of the two energy
 * identities using the same grid (left-point sums, the A-term integrated
 * along the free heat flow, realized quadratic variation of the noise), so
 * `energy_residual` can compare them with the energies of the computed states.
 */

#include "errors.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace spdeavg {

struct InitialCondition {
    SpectralField x0;
    SpectralField v0;
    SpectralField y0;
};

struct SystemConfig {
    double length = 1.0;
    std::size_t n_modes = 16;
    CoefficientSet coefficients;
    NoiseSpec noise;
    double epsilon = 1e-2;
    double horizon = 1.0;
    double dt = 1e-3;
    double c_fast = 0.1; // fast inner step <= c_fast * epsilon
    InitialCondition initial;

    /// Number of macro steps; T / dt must be an integer.
    std::size_t steps() const {
        const double r = horizon / dt;
        const auto n = static_cast<std::size_t>(std::llround(r));
        if (n == 0 || std::abs(r - static_cast<double>(n)) > 1e-8 * r)
            throw ConfigError("horizon must be an integer multiple of dt", "time.dt");
        return n;
    }

    /// Fast substeps per macro step so that the inner step is <= c_fast * epsilon.
    std::size_t fast_substeps() const {
        const double r = dt / (c_fast * epsilon);
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9)));
    }

    void validate() const {
        if (!(length > 0.0)) throw ConfigError("must be positive", "domain.length");
        if (n_modes == 0) throw ConfigError("must be >= 1", "domain.modes");
        if (!(epsilon > 0.0)) throw ConfigError("must be positive", "time.epsilon");
        if (!(dt > 0.0) || !(dt <= horizon)) throw ConfigError("need 0 < dt <= horizon", "time.dt");
        if (!(c_fast > 0.0)) throw ConfigError("must be positive", "time.c_fast");
        if (coefficients.n_modes != n_modes || coefficients.length != length)
            throw ConfigError("coefficient basis does not match domain", "model");
        if (noise.n_modes() != n_modes) throw ConfigError("noise spectrum length does not match mode count", "noise");
        for (const auto* f : {&initial.x0, &initial.v0, &initial.y0}) {
            if (f->n_modes() != n_modes || f->domain_length() != length)
                throw ConfigError("initial field basis does not match domain", "initial");
            if (!f->all_finite()) throw ConfigError("initial field not finite", "initial");
        }
        (void)steps();
    }
};

struct IntegratorOptions {
    std::size_t stride = 1;          // keep every stride-th macro step (t = 0 and t = T always kept)
    unsigned noise_refinement = 1;   // each noise increment is summed from this many sub-increments
    bool exact_wave_variance = false;
    bool record_energy = true;       // unavailable with exact_wave_variance
};

/// Right-hand sides of the energy identities accumulated from t = 0.
struct EnergyLedger {
    double slow_initial = 0.0;  // ||V0||^2 + ||X0||_1^2
    double slow_rhs = 0.0;      // 2 int (V, f) + 2 int (V, sigma dW1) + quadratic variation
    double fast_initial = 0.0;  // ||Y0||^2
    double fast_rhs = 0.0;      // (2/eps) int (<AY,Y> + (g,Y)) + (2/sqrt eps) int (Y, b dW2) + QV/eps
};

struct TrajectorySample {
    double t = 0.0;
    WaveState slow;
    SpectralField fast;
    std::optional<EnergyLedger> diagnostics;
};

using Trajectory = std::vector<TrajectorySample>;

struct NoiseStreams {
    NoiseStream w1;
    NoiseStream w2;
};

/// Streams for one replica: same seed, group and replica, channels W1 and W2.
inline NoiseStreams make_streams(std::uint64_t seed, std::uint32_t group, std::uint32_t replica) {
    return {NoiseStream(seed, {group, replica, Channel::W1}), NoiseStream(seed, {group, replica, Channel::W2})};
}

namespace detail {

inline void check_streams(const NoiseStreams& s) {
    const auto& a = s.w1.id();
    const auto& b = s.w2.id();
    if (a.channel != Channel::W1 || b.channel != Channel::W2)
        throw ConfigError("stream channels must be W1 and W2", "streams");
    if (a.group != b.group || a.replica != b.replica || s.w1.seed() != s.w2.seed())
        throw ConfigError("W1 and W2 streams belong to different replicas", "streams");
}

/// Per-mode constants of the slow rotation over one macro step.
struct SlowKernel {
    std::vector<double> omega, cos_wt, sin_wt;
    SlowKernel(std::size_t n, double length, double dt) : omega(n), cos_wt(n), sin_wt(n) {
        for (std::size_t k = 0; k < n; ++k) {
            omega[k] = std::sqrt(eigenvalue(k + 1, length));
            cos_wt[k] = std::cos(omega[k] * dt);
            sin_wt[k] = std::sin(omega[k] * dt);
        }
    }
};

/// Mutable slow state in raw coefficients.
struct SlowState {
    std::vector<double> x, v;
};

/**
 * Advances (x, v) by one macro step. `drift` and `mult` are f and the sigma
 * multipliers frozen at the step start. Returns the slow energy-ledger increment.
 */
inline double slow_step(SlowState& s, const SlowKernel& k, const std::vector<double>& drift, const std::vector<double>& mult,
                        const std::vector<double>& dw, double dt) {
    double ledger = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double noise = mult[i] * dw[i];
        const double kick = drift[i] * dt + noise;
        const double x0 = s.x[i], v0 = s.v[i];
        const double w = k.omega[i], c = k.cos_wt[i], sn = k.sin_wt[i];
        ledger += 2.0 * v0 * drift[i] * dt + 2.0 * v0 * noise + noise * noise;
        s.x[i] = c * x0 + sn / w * v0 + sn / w * kick;
        s.v[i] = -w * sn * x0 + c * v0 + c * kick;
    }
    return ledger;
}

/// Exact-variance variant: drift uses the exact kernel integrals, noise the exact joint convolution.
inline void slow_step_exact(SlowState& s, const SlowKernel& k, const std::vector<double>& drift,
                            const std::vector<double>& mult, const WaveKick& kick) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double x0 = s.x[i], v0 = s.v[i];
        const double w = k.omega[i], c = k.cos_wt[i], sn = k.sin_wt[i];
        s.x[i] = c * x0 + sn / w * v0 + (1.0 - c) / (w * w) * drift[i] + mult[i] * kick.position[i];
        s.v[i] = -w * sn * x0 + c * v0 + sn / w * drift[i] + mult[i] * kick.velocity[i];
    }
}

/// Per-mode constants of one fast substep of length h at time scale eps.
struct FastKernel {
    std::vector<double> alpha, decay, gain, theta;
    double h = 0.0, eps = 1.0;
    FastKernel(std::size_t n, double length, double h_, double eps_) : alpha(n), decay(n), gain(n), theta(n), h(h_), eps(eps_) {
        for (std::size_t k = 0; k < n; ++k) {
            alpha[k] = eigenvalue(k + 1, length);
            theta[k] = alpha[k] / eps;
            decay[k] = std::exp(-theta[k] * h);
            gain[k] = -std::expm1(-theta[k] * h) / alpha[k];
        }
    }
};

/// One fast substep given g and b frozen at its start. Returns the fast ledger increment.
inline double fast_step(std::vector<double>& y, const FastKernel& k, const std::vector<double>& g,
                        const std::vector<double>& b, const OuIncrement& noise) {
    const double inv_sqrt_eps = 1.0 / std::sqrt(k.eps);
    double ledger = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double y0 = y[i];
        const double bw = b[i] * noise.dW[i];
        // int <AY, Y> over the substep taken exactly along the free heat flow
        ledger += (k.decay[i] * k.decay[i] - 1.0) * y0 * y0 + 2.0 * k.h / k.eps * g[i] * y0 + 2.0 * inv_sqrt_eps * y0 * bw +
                  bw * bw / k.eps;
        y[i] = k.decay[i] * y0 + k.gain[i] * g[i] + b[i] * inv_sqrt_eps * noise.conv[i];
    }
    return ledger;
}

inline bool finite(const std::vector<double>& v) {
    for (double c : v)
        if (!std::isfinite(c)) return false;
    return true;
}

inline SpectralField field(const std::vector<double>& v, double length) { return SpectralField::unchecked(v, length); }

inline bool keep_sample(std::size_t step, std::size_t total, std::size_t stride) {
    return step == total || (stride > 0 && step % stride == 0);
}

} // namespace detail

/// Full slow-fast system with the given W1/W2 streams.
inline Trajectory integrate_full(const SystemConfig& cfg, NoiseStreams streams, const IntegratorOptions& opt = {}) {
    cfg.validate();
    detail::check_streams(streams);
    if (opt.noise_refinement == 0) throw ConfigError("must be >= 1", "noise_refinement");
    const bool ledger_on = opt.record_energy && !opt.exact_wave_variance;
    const std::size_t n = cfg.n_modes;
    const double len = cfg.length;
    const std::size_t steps = cfg.steps();
    const std::size_t nsub = cfg.fast_substeps();
    const double hf = cfg.dt / static_cast<double>(nsub);
    const auto& coef = cfg.coefficients;
    const detail::SlowKernel sk(n, len, cfg.dt);
    const detail::FastKernel fk(n, len, hf, cfg.epsilon);

    detail::SlowState s{cfg.initial.x0.values(), cfg.initial.v0.values()};
    std::vector<double> y = cfg.initial.y0.values();
    EnergyLedger led;
    led.slow_initial = energy(WaveState(cfg.initial.x0, cfg.initial.v0));
    led.fast_initial = sobolev_norm_squared(cfg.initial.y0, 0.0);

    Trajectory out;
    out.reserve(steps / std::max<std::size_t>(opt.stride, 1) + 2);
    auto emit = [&](std::size_t step) {
        out.push_back({static_cast<double>(step) * cfg.dt,
                       WaveState(detail::field(s.x, len), detail::field(s.v, len)), detail::field(y, len),
                       ledger_on ? std::optional<EnergyLedger>(led) : std::nullopt});
    };
    emit(0);

    for (std::size_t step = 0; step < steps; ++step) {
        const auto X = detail::field(s.x, len);
        const auto Y = detail::field(y, len);
        const auto drift = coef.f(X, Y).values();
        const auto mult = coef.sigma(X);

        for (std::size_t j = 0; j < nsub; ++j) {
            const auto Yj = detail::field(y, len);
            const auto g = coef.g(X, Yj).values();
            const auto b = coef.b(X, Yj);
            const auto noise = sample_ou_pair(cfg.noise.lambda2(), fk.theta, hf, opt.noise_refinement, streams.w2);
            led.fast_rhs += detail::fast_step(y, fk, g, b, noise);
        }
        if (opt.exact_wave_variance) {
            const auto kick = sample_wave_kick(cfg.noise.lambda1(), sk.omega, cfg.dt, opt.noise_refinement, streams.w1);
            detail::slow_step_exact(s, sk, drift, mult, kick);
        } else {
            const auto dw = sample_wiener(cfg.noise.lambda1(), cfg.dt, opt.noise_refinement, streams.w1);
            led.slow_rhs += detail::slow_step(s, sk, drift, mult, dw, cfg.dt);
        }
        if (!detail::finite(s.x) || !detail::finite(s.v) || !detail::finite(y))
            throw IntegratorBlowup("integrate_full: non-finite mode", step + 1);
        if (detail::keep_sample(step + 1, steps, opt.stride)) emit(step + 1);
    }
    return out;
}

struct AuxiliaryRun {
    Trajectory auxiliary; // (X-hat, Y-hat)
    Trajectory full;      // (X, Y) on the identical noise
};

/**
 * @brief Khasminskii auxiliary processes on the delta-grid, integrated in
 * lockstep with the full system so both see the same W1 and W2 increments.
 *
 * Y-hat solves the fast equation with the slow argument frozen at X_{k delta};
 * X-hat uses f(X_{s(delta)}, Y-hat_s) and sigma(X_{s(delta)}).
 */
inline AuxiliaryRun integrate_auxiliary(const SystemConfig& cfg, double delta, NoiseStreams streams,
                                        const IntegratorOptions& opt = {}) {
    cfg.validate();
    detail::check_streams(streams);
    if (!(delta >= cfg.dt * (1.0 - 1e-12))) throw ConfigError("delta must be >= dt", "delta");
    const double ratio_d = delta / cfg.dt;
    const auto ratio = static_cast<std::size_t>(std::llround(ratio_d));
    if (ratio == 0 || std::abs(ratio_d - static_cast<double>(ratio)) > 1e-8 * ratio_d)
        throw ConfigError("delta must be an integer multiple of dt", "delta");
    if (opt.noise_refinement == 0) throw ConfigError("must be >= 1", "noise_refinement");

    const std::size_t n = cfg.n_modes;
    const double len = cfg.length;
    const std::size_t steps = cfg.steps();
    const std::size_t nsub = cfg.fast_substeps();
    const double hf = cfg.dt / static_cast<double>(nsub);
    const auto& coef = cfg.coefficients;
    const detail::SlowKernel sk(n, len, cfg.dt);
    const detail::FastKernel fk(n, len, hf, cfg.epsilon);

    detail::SlowState s{cfg.initial.x0.values(), cfg.initial.v0.values()};
    detail::SlowState sh = s;
    std::vector<double> y = cfg.initial.y0.values();
    std::vector<double> yh = y;
    std::vector<double> x_break = s.x;

    AuxiliaryRun out;
    auto emit = [&](std::size_t step) {
        const double t = static_cast<double>(step) * cfg.dt;
        out.full.push_back({t, WaveState(detail::field(s.x, len), detail::field(s.v, len)), detail::field(y, len), {}});
        out.auxiliary.push_back(
            {t, WaveState(detail::field(sh.x, len), detail::field(sh.v, len)), detail::field(yh, len), {}});
    };
    emit(0);

    for (std::size_t step = 0; step < steps; ++step) {
        if (step % ratio == 0) x_break = s.x;
        const auto X = detail::field(s.x, len);
        const auto Xb = detail::field(x_break, len);
        const auto drift = coef.f(X, detail::field(y, len)).values();
        const auto drift_h = coef.f(Xb, detail::field(yh, len)).values();
        const auto mult = coef.sigma(X);
        const auto mult_h = coef.sigma(Xb);

        for (std::size_t j = 0; j < nsub; ++j) {
            const auto Yj = detail::field(y, len);
            const auto Yhj = detail::field(yh, len);
            const auto g = coef.g(X, Yj).values();
            const auto b = coef.b(X, Yj);
            const auto gh = coef.g(Xb, Yhj).values();
            const auto bh = coef.b(Xb, Yhj);
            const auto noise = sample_ou_pair(cfg.noise.lambda2(), fk.theta, hf, opt.noise_refinement, streams.w2);
            detail::fast_step(y, fk, g, b, noise);
            detail::fast_step(yh, fk, gh, bh, noise);
        }
        if (opt.exact_wave_variance) {
            const auto kick = sample_wave_kick(cfg.noise.lambda1(), sk.omega, cfg.dt, opt.noise_refinement, streams.w1);
            detail::slow_step_exact(s, sk, drift, mult, kick);
            detail::slow_step_exact(sh, sk, drift_h, mult_h, kick);
        } else {
            const auto dw = sample_wiener(cfg.noise.lambda1(), cfg.dt, opt.noise_refinement, streams.w1);
            detail::slow_step(s, sk, drift, mult, dw, cfg.dt);
            detail::slow_step(sh, sk, drift_h, mult_h, dw, cfg.dt);
        }
        if (!detail::finite(s.x) || !detail::finite(s.v) || !detail::finite(y) || !detail::finite(sh.x) ||
            !detail::finite(sh.v) || !detail::finite(yh))
            throw IntegratorBlowup("integrate_auxiliary: non-finite mode", step + 1);
        if (detail::keep_sample(step + 1, steps, opt.stride)) emit(step + 1);
    }
    return out;
}

/// Relative residuals of the slow and fast energy identities at each sample.
struct EnergyResiduals {
    std::vector<double> slow;
    std::vector<double> fast;

    double max_slow() const { return max_of(slow); }
    double max_fast() const { return max_of(fast); }

private:
    static double max_of(const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, x);
        return m;
    }
};

namespace detail {
inline double relative_gap(double lhs, double rhs, double initial) {
    const double scale = std::max({std::abs(lhs), std::abs(rhs), std::abs(initial)});
    return scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
}
} // namespace detail

/// |lhs - rhs| / max(|lhs|, |rhs|, initial energy) for ||V||^2 + ||X||_1^2 and for ||Y||^2.
inline EnergyResiduals energy_residual(const Trajectory& traj, const SystemConfig& cfg) {
    (void)cfg;
    EnergyResiduals r;
    r.slow.reserve(traj.size());
    r.fast.reserve(traj.size());
    for (const auto& smp : traj) {
        if (!smp.diagnostics) throw UsageError("energy_residual: trajectory carries no recorded energy terms");
        const auto& d = *smp.diagnostics;
        r.slow.push_back(detail::relative_gap(energy(smp.slow), d.slow_initial + d.slow_rhs, d.slow_initial));
        r.fast.push_back(detail::relative_gap(sobolev_norm_squared(smp.fast, 0.0), d.fast_initial + d.fast_rhs, d.fast_initial));
    }
    return r;
}

} // namespace spdeavg
