#pragma once

/**
 * @brief The fast equation with the slow argument frozen at x, run at unit
 * time scale: dY = (AY + g(x, Y)) dt + b(x, Y) dW^2.
 *
 * Provides long-run statistics of its invariant measure mu^x, the averaged
 * drift fbar(x) = int f(x, y) mu^x(dy), synchronous-coupling contraction and
 * the first-variation process zeta = D_x Y . h.
 */

#include "coupled_solver.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"
#include "stats.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

namespace spdeavg {

struct FrozenTrajectory {
    std::vector<double> t;
    std::vector<SpectralField> y;
};

namespace detail {

inline std::size_t step_count(double horizon, double dt, const char* key) {
    if (!(dt > 0.0)) throw ConfigError("step must be positive", key);
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive", key);
    const double r = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(r));
    if (n == 0 || std::abs(r - static_cast<double>(n)) > 1e-8 * r)
        throw ConfigError("horizon must be an integer multiple of the step", key);
    return n;
}

/// Exponential-Euler stepper of the frozen equation (time scale 1).
class FrozenStepper {
public:
    FrozenStepper(const CoefficientSet& c, const NoiseSpec& noise, double dt)
        : coef_(&c), noise_(&noise), kernel_(c.n_modes, c.length, dt, 1.0), dt_(dt) {
        if (noise.n_modes() != c.n_modes) throw ConfigError("noise spectrum length does not match mode count", "noise");
    }

    OuIncrement draw(NoiseStream& s) const { return sample_ou_pair(noise_->lambda2(), kernel_.theta, dt_, 1, s); }

    void apply(const SpectralField& x, std::vector<double>& y, const OuIncrement& inc) const {
        const auto Y = SpectralField::unchecked(y, coef_->length);
        const auto g = coef_->g(x, Y).values();
        const auto b = coef_->b(x, Y);
        fast_step(y, kernel_, g, b, inc);
    }

    void step(const SpectralField& x, std::vector<double>& y, NoiseStream& s) const { apply(x, y, draw(s)); }

    const FastKernel& kernel() const noexcept { return kernel_; }
    double dt() const noexcept { return dt_; }

private:
    const CoefficientSet* coef_;
    const NoiseSpec* noise_;
    FastKernel kernel_;
    double dt_;
};

inline void require_finite(const std::vector<double>& y, std::size_t step, const char* who) {
    if (!finite(y)) throw IntegratorBlowup(std::string(who) + ": non-finite mode", step);
}

} // namespace detail

/// Integrates the frozen equation from y over [0, T]; keeps every `stride`-th state.
inline FrozenTrajectory integrate_frozen(const SpectralField& x, const SpectralField& y, double horizon, double dt,
                                         const CoefficientSet& c, const NoiseSpec& noise, NoiseStream stream,
                                         std::size_t stride = 1) {
    const std::size_t steps = detail::step_count(horizon, dt, "frozen.horizon");
    const detail::FrozenStepper st(c, noise, dt);
    std::vector<double> yy = y.values();
    FrozenTrajectory out;
    out.t.push_back(0.0);
    out.y.push_back(y);
    for (std::size_t n = 0; n < steps; ++n) {
        st.step(x, yy, stream);
        detail::require_finite(yy, n + 1, "integrate_frozen");
        if (detail::keep_sample(n + 1, steps, stride)) {
            out.t.push_back(static_cast<double>(n + 1) * dt);
            out.y.push_back(SpectralField::unchecked(yy, c.length));
        }
    }
    return out;
}

/// Budget of a Monte Carlo estimate of the averaged drift.
struct DriftBudget {
    enum class Method { TimeAverage, Ensemble };
    Method method = Method::TimeAverage;
    double burn_in = 10.0;      // time discarded (time average)
    double horizon = 2000.0;    // total path length (time average)
    double dt = 1e-2;
    std::size_t batches = 20;
    std::size_t replicas = 64;  // ensemble
    double terminal = 20.0;     // ensemble terminal time

    /// Burn-in 10/kappa, horizon 2000/kappa, 20 batches.
    static DriftBudget defaults(double kappa) {
        if (!(kappa > 0.0)) throw ConfigError("default drift budget needs kappa > 0", "drift");
        DriftBudget b;
        b.burn_in = 10.0 / kappa;
        b.horizon = 2000.0 / kappa;
        b.terminal = 10.0 / kappa;
        // keep burn_in and horizon on the step grid
        b.burn_in = std::ceil(b.burn_in / b.dt) * b.dt;
        b.horizon = std::ceil(b.horizon / b.dt) * b.dt;
        b.terminal = std::ceil(b.terminal / b.dt) * b.dt;
        return b;
    }
};

struct AveragedDriftEstimate {
    SpectralField value;
    double stderr = 0.0;                 // Monte Carlo standard error in the H-norm
    std::vector<double> mode_stderr;     // per-mode standard errors
    double burn_in = 0.0;
    double horizon = 0.0;
};

using Functional = std::function<std::vector<double>(const SpectralField& y)>;

/**
 * @brief Estimates int phi(y) mu^x(dy) for a vector functional phi.
 *
 * Time average: one path from y0, (T_a - T_b)^{-1} int_{T_b}^{T_a} phi(Y_s) ds
 * with batch-means errors. Ensemble: mean of phi(Y_T) over independent paths.
 */
inline AveragedDriftEstimate estimate_invariant_mean(const SpectralField& x, const Functional& phi,
                                                     const CoefficientSet& c, const NoiseSpec& noise,
                                                     const DriftBudget& budget, NoiseStream stream,
                                                     std::optional<SpectralField> y0 = std::nullopt) {
    const detail::FrozenStepper st(c, noise, budget.dt);
    const SpectralField start = y0 ? *y0 : SpectralField::zeros(c.n_modes, c.length);
    AveragedDriftEstimate est;
    if (budget.method == DriftBudget::Method::TimeAverage) {
        if (!(budget.horizon > budget.burn_in)) throw ConfigError("horizon must exceed burn-in", "drift.horizon");
        if (budget.batches < 2) throw ConfigError("need at least two batches", "drift.batches");
        const std::size_t total = detail::step_count(budget.horizon, budget.dt, "drift.horizon");
        const auto burn = static_cast<std::size_t>(std::llround(budget.burn_in / budget.dt));
        const std::size_t avg_steps = total - burn;
        const std::size_t blen = avg_steps / budget.batches;
        if (blen == 0) throw ConfigError("averaging window shorter than the batch count", "drift.horizon");
        const std::size_t skip = burn + (avg_steps - blen * budget.batches);

        std::vector<double> y = start.values();
        std::vector<std::vector<double>> batch_sums;
        std::vector<double> acc;
        for (std::size_t n = 0; n < total; ++n) {
            if (n >= skip) {
                const auto v = phi(SpectralField::unchecked(y, c.length));
                if (acc.empty()) acc.assign(v.size(), 0.0);
                for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
                if ((n - skip + 1) % blen == 0) {
                    for (double& a : acc) a /= static_cast<double>(blen);
                    batch_sums.push_back(std::move(acc));
                    acc.clear();
                }
            }
            st.step(x, y, stream);
            detail::require_finite(y, n + 1, "estimate_invariant_mean");
        }
        const std::size_t dim = batch_sums.front().size();
        std::vector<double> value(dim), col(batch_sums.size());
        est.mode_stderr.resize(dim);
        double se2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t b = 0; b < batch_sums.size(); ++b) col[b] = batch_sums[b][i];
            value[i] = stats::mean(col);
            est.mode_stderr[i] = stats::stderr_of_mean(col);
            se2 += est.mode_stderr[i] * est.mode_stderr[i];
        }
        est.value = SpectralField::unchecked(std::move(value), c.length);
        est.stderr = std::sqrt(se2);
        est.burn_in = budget.burn_in;
        est.horizon = budget.horizon;
    } else {
        if (budget.replicas < 2) throw ConfigError("need at least two replicas", "drift.replicas");
        const std::size_t steps = detail::step_count(budget.terminal, budget.dt, "drift.terminal");
        std::vector<std::vector<double>> samples;
        samples.reserve(budget.replicas);
        for (std::size_t m = 0; m < budget.replicas; ++m) {
            std::vector<double> y = start.values();
            for (std::size_t n = 0; n < steps; ++n) {
                st.step(x, y, stream);
                detail::require_finite(y, n + 1, "estimate_invariant_mean");
            }
            samples.push_back(phi(SpectralField::unchecked(y, c.length)));
        }
        const std::size_t dim = samples.front().size();
        std::vector<double> value(dim), col(samples.size());
        est.mode_stderr.resize(dim);
        double se2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t m = 0; m < samples.size(); ++m) col[m] = samples[m][i];
            value[i] = stats::mean(col);
            est.mode_stderr[i] = stats::stderr_of_mean(col);
            se2 += est.mode_stderr[i] * est.mode_stderr[i];
        }
        est.value = SpectralField::unchecked(std::move(value), c.length);
        est.stderr = std::sqrt(se2);
        est.burn_in = 0.0;
        est.horizon = budget.terminal;
    }
    return est;
}

/// fbar(x) = int f(x, y) mu^x(dy) by Monte Carlo.
inline AveragedDriftEstimate estimate_avg_drift(const SpectralField& x, const CoefficientSet& c, const NoiseSpec& noise,
                                                const DriftBudget& budget, NoiseStream stream) {
    const Functional phi = [&c, &x](const SpectralField& y) { return c.f(x, y).values(); };
    return estimate_invariant_mean(x, phi, c, noise, budget, std::move(stream));
}

/// Exact fbar for linear_ou: x_k / (alpha_k + gamma).
inline SpectralField closed_form_avg_drift(const SpectralField& x, const CoefficientSet& c) {
    if (!c.ou) throw UsageError("closed_form_avg_drift: only available for the linear_ou fixture");
    std::vector<double> out(x.n_modes());
    for (std::size_t k = 1; k <= out.size(); ++k)
        out[k - 1] = x[k] / (eigenvalue(k, x.domain_length()) + c.ou->gamma);
    return SpectralField(std::move(out), x.domain_length());
}

struct MixingReport {
    std::vector<double> t;
    std::vector<double> msd;   // E ||Y^{x,y}_t - Y^{x,y'}_t||^2
    double exponent = 0.0;     // c-hat in msd ~ C exp(-c-hat t)
    double prefactor = 0.0;
    bool fully_contracted = false;
};

/**
 * @brief Synchronous coupling: both initial conditions see the same W2 path.
 * Fits log msd against t on [T/4, T].
 */
inline MixingReport estimate_mixing(const SpectralField& x, const SpectralField& y, const SpectralField& y2, double horizon,
                                    double dt, std::size_t replicas, const CoefficientSet& c, const NoiseSpec& noise,
                                    NoiseStream stream, std::size_t stride = 1) {
    if (replicas == 0) throw ConfigError("need at least one replica", "mixing.replicas");
    const std::size_t steps = detail::step_count(horizon, dt, "mixing.horizon");
    const detail::FrozenStepper st(c, noise, dt);
    MixingReport rep;
    for (std::size_t n = 0; n <= steps; ++n)
        if (n == 0 || detail::keep_sample(n, steps, stride)) rep.t.push_back(static_cast<double>(n) * dt);
    std::vector<std::vector<double>> per(rep.t.size(), std::vector<double>(replicas, 0.0));
    for (std::size_t m = 0; m < replicas; ++m) {
        std::vector<double> a = y.values(), b = y2.values();
        std::size_t slot = 0;
        auto record = [&] {
            double d = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
            per[slot++][m] = d;
        };
        record();
        for (std::size_t n = 0; n < steps; ++n) {
            const auto inc = st.draw(stream);
            st.apply(x, a, inc);
            st.apply(x, b, inc);
            detail::require_finite(a, n + 1, "estimate_mixing");
            detail::require_finite(b, n + 1, "estimate_mixing");
            if (detail::keep_sample(n + 1, steps, stride)) record();
        }
    }
    rep.msd.resize(rep.t.size());
    for (std::size_t i = 0; i < rep.t.size(); ++i) rep.msd[i] = stats::mean(per[i]);

    std::vector<double> ft, fl;
    bool any_above = false;
    for (std::size_t i = 0; i < rep.t.size(); ++i) {
        if (rep.t[i] < horizon / 4.0) continue;
        if (rep.msd[i] >= 1e-14) any_above = true;
        if (rep.msd[i] > 0.0) {
            ft.push_back(rep.t[i]);
            fl.push_back(std::log(rep.msd[i]));
        }
    }
    if (!any_above || ft.size() < 2) {
        rep.fully_contracted = true;
        rep.exponent = std::numeric_limits<double>::infinity();
        rep.prefactor = 0.0;
        return rep;
    }
    const auto fit = stats::fit_linear(ft, fl);
    rep.exponent = -fit.slope;
    rep.prefactor = std::exp(fit.intercept);
    return rep;
}

struct FirstVariationResult {
    std::vector<double> t;
    std::vector<double> mean_sq;          // E ||zeta_t||^2
    double sup_mean_sq = 0.0;
    std::vector<double> terminal_mean;    // E zeta_T per mode
    std::vector<double> terminal_stderr;  // per mode
    std::vector<SpectralField> path;      // zeta_t of the first replica
};

/**
 * @brief First variation zeta_t = D_x Y_t^{x,y} . h, zeta_0 = 0:
 * d zeta = (A zeta + g_x h + g_y zeta) dt + (b_x h + b_y zeta) dW^2,
 * integrated along the simulated Y^{x,y} path with the same increments.
 */
inline FirstVariationResult first_variation(const SpectralField& x, const SpectralField& y, const SpectralField& h,
                                            double horizon, double dt, std::size_t replicas, const CoefficientSet& c,
                                            const NoiseSpec& noise, NoiseStream stream, std::size_t stride = 1) {
    if (!c.has_derivatives()) throw ConfigError("coefficient derivatives g_x, g_y, b_x, b_y are required", "model");
    if (replicas == 0) throw ConfigError("need at least one replica", "first_variation.replicas");
    const std::size_t steps = detail::step_count(horizon, dt, "first_variation.horizon");
    const detail::FrozenStepper st(c, noise, dt);
    const auto& kern = st.kernel();
    const double len = c.length;
    FirstVariationResult res;
    for (std::size_t n = 0; n <= steps; ++n)
        if (n == 0 || detail::keep_sample(n, steps, stride)) res.t.push_back(static_cast<double>(n) * dt);
    std::vector<std::vector<double>> sq(res.t.size(), std::vector<double>(replicas, 0.0));
    std::vector<std::vector<double>> terminal(c.n_modes, std::vector<double>(replicas, 0.0));

    for (std::size_t m = 0; m < replicas; ++m) {
        std::vector<double> yy = y.values();
        std::vector<double> z(c.n_modes, 0.0);
        std::size_t slot = 0;
        auto record = [&] {
            double s = 0.0;
            for (double v : z) s += v * v;
            sq[slot++][m] = s;
            if (m == 0) res.path.push_back(SpectralField::unchecked(z, len));
        };
        record();
        for (std::size_t n = 0; n < steps; ++n) {
            const auto inc = st.draw(stream);
            const auto Y = SpectralField::unchecked(yy, len);
            const auto Z = SpectralField::unchecked(z, len);
            auto drift = c.g_dx(x, Y, h).values();
            const auto gy = c.g_dy(x, Y, Z).values();
            auto mult = c.b_dx(x, Y, h);
            const auto by = c.b_dy(x, Y, Z);
            for (std::size_t i = 0; i < drift.size(); ++i) {
                drift[i] += gy[i];
                mult[i] += by[i];
            }
            detail::fast_step(z, kern, drift, mult, inc);
            st.apply(x, yy, inc);
            detail::require_finite(z, n + 1, "first_variation");
            detail::require_finite(yy, n + 1, "first_variation");
            if (detail::keep_sample(n + 1, steps, stride)) record();
        }
        for (std::size_t i = 0; i < z.size(); ++i) terminal[i][m] = z[i];
    }
    res.mean_sq.resize(res.t.size());
    for (std::size_t i = 0; i < res.t.size(); ++i) {
        res.mean_sq[i] = stats::mean(sq[i]);
        res.sup_mean_sq = std::max(res.sup_mean_sq, res.mean_sq[i]);
    }
    res.terminal_mean.resize(c.n_modes);
    res.terminal_stderr.resize(c.n_modes);
    for (std::size_t i = 0; i < c.n_modes; ++i) {
        res.terminal_mean[i] = stats::mean(terminal[i]);
        res.terminal_stderr[i] = stats::stderr_of_mean(terminal[i]);
    }
    return res;
}

struct DriftRelaxation {
    std::vector<double> t;
    std::vector<double> gap;      // || E f(x, Y_t^{x,y}) - fbar(x) ||
    std::vector<double> stderr;   // Monte Carlo error of E f, H-norm
    double exponent = std::numeric_limits<double>::quiet_NaN();
};

/// Decay of || E f(x, Y_t^{x,y}) - fbar(x) || in t; exponent fitted where the gap exceeds 3 stderr.
inline DriftRelaxation estimate_drift_relaxation(const SpectralField& x, const SpectralField& y, const SpectralField& fbar,
                                                 double horizon, double dt, std::size_t replicas,
                                                 const CoefficientSet& c, const NoiseSpec& noise, NoiseStream stream,
                                                 std::size_t stride = 1) {
    const std::size_t steps = detail::step_count(horizon, dt, "relaxation.horizon");
    const detail::FrozenStepper st(c, noise, dt);
    DriftRelaxation rep;
    for (std::size_t n = 0; n <= steps; ++n)
        if (n == 0 || detail::keep_sample(n, steps, stride)) rep.t.push_back(static_cast<double>(n) * dt);
    // per time slot, per mode, per replica
    std::vector<std::vector<std::vector<double>>> vals(
        rep.t.size(), std::vector<std::vector<double>>(c.n_modes, std::vector<double>(replicas)));
    for (std::size_t m = 0; m < replicas; ++m) {
        std::vector<double> yy = y.values();
        std::size_t slot = 0;
        auto record = [&] {
            const auto f = c.f(x, SpectralField::unchecked(yy, c.length)).values();
            for (std::size_t i = 0; i < f.size(); ++i) vals[slot][i][m] = f[i];
            ++slot;
        };
        record();
        for (std::size_t n = 0; n < steps; ++n) {
            st.step(x, yy, stream);
            detail::require_finite(yy, n + 1, "estimate_drift_relaxation");
            if (detail::keep_sample(n + 1, steps, stride)) record();
        }
    }
    std::vector<double> ft, fl;
    for (std::size_t s = 0; s < rep.t.size(); ++s) {
        double g2 = 0.0, e2 = 0.0;
        for (std::size_t i = 0; i < c.n_modes; ++i) {
            const double d = stats::mean(vals[s][i]) - fbar.coeffs()[i];
            const double se = stats::stderr_of_mean(vals[s][i]);
            g2 += d * d;
            e2 += se * se;
        }
        rep.gap.push_back(std::sqrt(g2));
        rep.stderr.push_back(std::sqrt(e2));
        if (rep.gap.back() > 3.0 * rep.stderr.back() && rep.gap.back() > 0.0) {
            ft.push_back(rep.t[s]);
            fl.push_back(std::log(rep.gap.back()));
        }
    }
    if (ft.size() >= 3) rep.exponent = -stats::fit_linear(ft, fl).slope;
    return rep;
}

/**
 * @brief Memo table for fbar on x quantized to a fixed per-mode resolution.
 *
 * Entries are deterministic functions of the quantized key, so concurrent
 * writers store equal values and the last write wins.
 */
class DriftMemo {
public:
    explicit DriftMemo(double resolution = 1e-6) : resolution_(resolution) {}

    using Key = std::vector<std::int64_t>;

    Key quantize(const SpectralField& x) const {
        Key k(x.n_modes());
        for (std::size_t i = 0; i < k.size(); ++i) k[i] = std::llround(x.coeffs()[i] / resolution_);
        return k;
    }

    /// Representative point of the quantization cell.
    SpectralField representative(const Key& k, double length) const {
        std::vector<double> v(k.size());
        for (std::size_t i = 0; i < k.size(); ++i) v[i] = static_cast<double>(k[i]) * resolution_;
        return SpectralField(std::move(v), length);
    }

    std::optional<AveragedDriftEstimate> find(const Key& k) const {
        std::lock_guard lock(mu_);
        const auto it = table_.find(k);
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

    void store(const Key& k, AveragedDriftEstimate e) {
        std::lock_guard lock(mu_);
        table_[k] = std::move(e);
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return table_.size();
    }

    double resolution() const noexcept { return resolution_; }

private:
    struct Hash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = 0xcbf29ce484222325ull;
            for (auto v : k) {
                h ^= static_cast<std::uint64_t>(v);
                h *= 0x100000001b3ull;
            }
            return static_cast<std::size_t>(h);
        }
    };

    double resolution_;
    mutable std::mutex mu_;
    std::unordered_map<Key, AveragedDriftEstimate, Hash> table_;
};

} // namespace spdeavg
