#pragma once

/**
 * @brief The averaged wave equation, slow half of the coupled scheme with f
 * replaced by fbar and no fast component.
 */

#include "coupled_solver.hpp"
#include "errors.hpp"
#include "frozen_fast.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace spdeavg {

/// Source of fbar(x): the exact OU formula or a Monte Carlo estimate.
class DriftProvider {
public:
    enum class Kind { ClosedForm, MonteCarlo };

    static DriftProvider closed_form(const CoefficientSet& c) {
        if (!c.ou) throw UsageError("closed_form drift: only available for the linear_ou fixture");
        DriftProvider p;
        p.kind_ = Kind::ClosedForm;
        p.coef_ = std::make_shared<const CoefficientSet>(c);
        return p;
    }

    /**
     * Every evaluation restarts the same Drift-channel stream (common random
     * numbers), so fbar-hat is a deterministic function of x.
     */
    static DriftProvider monte_carlo(const CoefficientSet& c, const NoiseSpec& noise, const DriftBudget& budget,
                                     std::uint64_t seed, double quality_rel = 0.05, double quality_abs = 1e-4) {
        DriftProvider p;
        p.kind_ = Kind::MonteCarlo;
        p.coef_ = std::make_shared<const CoefficientSet>(c);
        p.noise_ = std::make_shared<const NoiseSpec>(noise);
        p.budget_ = budget;
        p.seed_ = seed;
        p.memo_ = std::make_shared<DriftMemo>();
        p.rel_ = quality_rel;
        p.abs_ = quality_abs;
        return p;
    }

    SpectralField operator()(const SpectralField& x) const {
        if (kind_ == Kind::ClosedForm) return closed_form_avg_drift(x, *coef_);
        return estimate(x).value;
    }

    /// Monte Carlo estimate with its error; throws EstimationQualityError on a poor estimate.
    AveragedDriftEstimate estimate(const SpectralField& x) const {
        if (kind_ == Kind::ClosedForm) {
            AveragedDriftEstimate e;
            e.value = closed_form_avg_drift(x, *coef_);
            e.mode_stderr.assign(x.n_modes(), 0.0);
            return e;
        }
        const auto key = memo_->quantize(x);
        if (auto hit = memo_->find(key)) return *hit;
        const auto xq = memo_->representative(key, x.domain_length());
        auto e = estimate_avg_drift(xq, *coef_, *noise_, budget_, stream());
        const double limit = rel_ * sobolev_norm(e.value, 0.0) + abs_;
        if (e.stderr > limit)
            throw EstimationQualityError("monte_carlo drift: stderr " + std::to_string(e.stderr) + " exceeds " +
                                         std::to_string(limit));
        memo_->store(key, e);
        return e;
    }

    Kind kind() const noexcept { return kind_; }
    const DriftBudget& budget() const noexcept { return budget_; }
    std::size_t memo_size() const { return memo_ ? memo_->size() : 0; }
    NoiseStream stream() const { return NoiseStream(seed_, {0, 0, Channel::Drift}); }

    std::string describe() const {
        if (kind_ == Kind::ClosedForm) return "closed_form";
        const bool ta = budget_.method == DriftBudget::Method::TimeAverage;
        return std::string("monte_carlo(") + (ta ? "time_average" : "ensemble") +
               ",burn_in=" + std::to_string(budget_.burn_in) + ",horizon=" + std::to_string(budget_.horizon) +
               ",replicas=" + std::to_string(budget_.replicas) + ",terminal=" + std::to_string(budget_.terminal) +
               ",dt=" + std::to_string(budget_.dt) + ")";
    }

private:
    DriftProvider() = default;

    Kind kind_ = Kind::ClosedForm;
    std::shared_ptr<const CoefficientSet> coef_;
    std::shared_ptr<const NoiseSpec> noise_;
    DriftBudget budget_;
    std::uint64_t seed_ = 0;
    std::shared_ptr<DriftMemo> memo_;
    double rel_ = 0.05, abs_ = 1e-4;
};

struct AveragedSample {
    double t = 0.0;
    WaveState slow;
};

struct AveragedRun {
    std::vector<AveragedSample> trajectory;
    std::string drift_source;
    std::string shared_noise_id;  // label of the W1 stream
};

/**
 * @brief Integrates the averaged equation on the (dt, N, L) grid of cfg.
 * cfg.epsilon and the fast initial state are ignored. The W1 increments are
 * drawn exactly as in integrate_full with the same options, so a fresh W1
 * stream with the paired run's label reproduces its slow noise.
 */
inline AveragedRun integrate_averaged(const SystemConfig& cfg, const DriftProvider& drift, NoiseStream w1,
                                      const IntegratorOptions& opt = {}) {
    cfg.validate();
    if (w1.id().channel != Channel::W1) throw ConfigError("averaged run needs a W1 stream", "streams");
    if (opt.noise_refinement == 0) throw ConfigError("must be >= 1", "noise_refinement");
    const std::size_t n = cfg.n_modes;
    const double len = cfg.length;
    const std::size_t steps = cfg.steps();
    const auto& coef = cfg.coefficients;
    const detail::SlowKernel sk(n, len, cfg.dt);

    AveragedRun run;
    run.drift_source = drift.describe();
    run.shared_noise_id = to_string(w1.id());
    detail::SlowState s{cfg.initial.x0.values(), cfg.initial.v0.values()};
    auto emit = [&](std::size_t step) {
        run.trajectory.push_back({static_cast<double>(step) * cfg.dt,
                                  WaveState(detail::field(s.x, len), detail::field(s.v, len))});
    };
    emit(0);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto X = detail::field(s.x, len);
        const auto fbar = drift(X).values();
        const auto mult = coef.sigma(X);
        if (opt.exact_wave_variance) {
            const auto kick = sample_wave_kick(cfg.noise.lambda1(), sk.omega, cfg.dt, opt.noise_refinement, w1);
            detail::slow_step_exact(s, sk, fbar, mult, kick);
        } else {
            const auto dw = sample_wiener(cfg.noise.lambda1(), cfg.dt, opt.noise_refinement, w1);
            detail::slow_step(s, sk, fbar, mult, dw, cfg.dt);
        }
        if (!detail::finite(s.x) || !detail::finite(s.v))
            throw IntegratorBlowup("integrate_averaged: non-finite mode", step + 1);
        if (detail::keep_sample(step + 1, steps, opt.stride)) emit(step + 1);
    }
    return run;
}

} // namespace spdeavg
