#pragma once

/**
 * @brief Experiment orchestration: replica pool, CSV emission, rate study,
 * sweeps behind the lemma checks, assumption report.
 */

#include "averaged_solver.hpp"
#include "config.hpp"
#include "coupled_solver.hpp"
#include "errors.hpp"
#include "frozen_fast.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"
#include "stats.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace spdeavg {

// ---------------------------------------------------------------- threads

/// --threads, else SPDE_THREADS, else 1.
inline unsigned resolve_threads(std::optional<unsigned> flag) {
    if (flag) {
        if (*flag == 0) throw ConfigError("must be >= 1", "--threads");
        return *flag;
    }
    if (const char* env = std::getenv("SPDE_THREADS"); env && *env) {
        unsigned v = 0;
        const std::string s(env);
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || v == 0)
            throw ConfigError("expected a positive integer, got '" + s + "'", "SPDE_THREADS");
        return v;
    }
    return 1;
}

/// Runs fn(i) for i in [0, n). On failure rethrows the exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- csv

/// 17 significant digits; nan and inf spelled out.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& add(double v) { return cell(format_double(v)); }
    CsvTable& add(std::size_t v) { return cell(std::to_string(v)); }
    CsvTable& add(const std::string& v) { return cell(v); }
    CsvTable& add(const char* v) { return cell(v); }
    CsvTable& add(bool v) { return cell(v ? "true" : "false"); }

    std::string str() const {
        std::string out;
        append_line(out, header_);
        for (const auto& r : rows_) {
            if (r.size() != header_.size()) throw UsageError("csv row width does not match header");
            append_line(out, r);
        }
        return out;
    }

    void write(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write '" + path.string() + "'", "--out");
        const auto s = str();
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

private:
    CsvTable& cell(std::string v) {
        if (rows_.empty()) throw UsageError("csv cell before row()");
        if (v.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : v) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
            v = q + "\"";
        }
        rows_.back().push_back(std::move(v));
        return *this;
    }

    static void append_line(std::string& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------- helpers

namespace detail {

/// Largest step <= dt that divides horizon into an integer number of steps.
inline double fit_step(double horizon, double dt) {
    const double n = std::ceil(horizon / dt - 1e-9);
    return horizon / n;
}

inline std::string short_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

/// Smallest multiple of dt that is >= t.
inline double on_grid(double t, double dt) { return std::ceil(t / dt - 1e-9) * dt; }

inline double slow_error(const WaveState& a, const WaveState& b) {
    return sobolev_norm_squared(a.position - b.position, 1.0) + sobolev_norm_squared(a.velocity - b.velocity, 0.0);
}

struct MeanErr {
    double mean = 0.0;
    double stderr = 0.0;
    std::size_t n = 0;
};

inline MeanErr summarize(const std::vector<std::optional<double>>& v) {
    std::vector<double> ok;
    for (const auto& x : v)
        if (x) ok.push_back(*x);
    MeanErr m;
    m.n = ok.size();
    if (!ok.empty()) {
        m.mean = stats::mean(ok);
        m.stderr = stats::stderr_of_mean(ok);
    }
    return m;
}

inline const TrajectorySample& at_time(const Trajectory& tr, double t) {
    for (const auto& s : tr)
        if (std::abs(s.t - t) < 1e-9 * std::max(1.0, t)) return s;
    throw UsageError("no trajectory sample at t = " + format_double(t));
}

} // namespace detail

// ---------------------------------------------------------------- simulate

/// simulate: t, energy, x_norm1, v_norm, y_norm, residual_slow, residual_fast.
inline CsvTable simulate_full(const SystemConfig& cfg, const IntegratorOptions& opt, std::uint64_t seed) {
    const auto tr = integrate_full(cfg, make_streams(seed, 0, 0), opt);
    std::optional<EnergyResiduals> res;
    if (opt.record_energy && !opt.exact_wave_variance) res = energy_residual(tr, cfg);
    CsvTable t({"t", "energy", "x_norm1", "v_norm", "y_norm", "residual_slow", "residual_fast"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const auto& s = tr[i];
        t.row()
            .add(s.t)
            .add(energy(s.slow))
            .add(sobolev_norm(s.slow.position, 1.0))
            .add(sobolev_norm(s.slow.velocity, 0.0))
            .add(sobolev_norm(s.fast, 0.0))
            .add(res ? res->slow[i] : nan)
            .add(res ? res->fast[i] : nan);
    }
    return t;
}

inline DriftProvider provider_from_config(const Config& cfg, const SystemConfig& sys, std::uint64_t seed) {
    const auto& c = sys.coefficients;
    const auto kind = cfg.get_string("drift.provider", c.ou ? "closed_form" : "monte_carlo");
    if (kind == "closed_form") {
        if (!c.ou) throw ConfigError("closed_form drift needs the linear_ou fixture", "drift.provider");
        return DriftProvider::closed_form(c);
    }
    if (kind == "monte_carlo")
        return DriftProvider::monte_carlo(c, sys.noise, budget_from_config(cfg, dissipativity_margin(c)), seed);
    throw ConfigError("expected closed_form or monte_carlo, got '" + kind + "'", "drift.provider");
}

/// simulate --averaged: same columns; y_norm and residuals are nan.
inline CsvTable simulate_averaged(const SystemConfig& cfg, const DriftProvider& drift, const IntegratorOptions& opt,
                                  std::uint64_t seed) {
    const auto run = integrate_averaged(cfg, drift, make_streams(seed, 0, 0).w1, opt);
    CsvTable t({"t", "energy", "x_norm1", "v_norm", "y_norm", "residual_slow", "residual_fast"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : run.trajectory)
        t.row()
            .add(s.t)
            .add(energy(s.slow))
            .add(sobolev_norm(s.slow.position, 1.0))
            .add(sobolev_norm(s.slow.velocity, 0.0))
            .add(nan)
            .add(nan)
            .add(nan);
    return t;
}

// ---------------------------------------------------------------- rate study

struct RateStudyParams {
    std::vector<double> epsilons;   // decreasing
    std::size_t replicas = 256;
    double dt_base = 1e-3;
    std::optional<double> stderr_target;  // relative stderr of each per-epsilon mean
    bool self_check = true;
};

struct RateRow {
    double epsilon = 0.0;
    double delta = 0.0;
    double dt = 0.0;
    std::size_t replicas = 0;
    std::size_t aborted = 0;
    double mse_mean = 0.0;
    double mse_stderr = 0.0;
    double half_mean = 0.0;   // error at T/2
    double half_stderr = 0.0;
};

struct RateReport {
    std::vector<RateRow> rows;
    stats::LinearFit fit;
    stats::LinearFit fit_half;
    double self_check_change = std::numeric_limits<double>::quiet_NaN();
    bool monotone = true;
    bool valid = true;
    std::vector<std::string> flags;
};

inline RateStudyParams rate_params_from_config(const Config& cfg) {
    RateStudyParams p;
    p.epsilons = cfg.get_list("study.epsilons", std::vector<double>{0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625,
                                                                     0.001953125});
    p.replicas = cfg.get_size("study.replicas", 256);
    p.dt_base = cfg.get_double("study.dt_base", 1e-3);
    if (cfg.has("study.stderr_target")) p.stderr_target = cfg.get_double("study.stderr_target");
    p.self_check = cfg.get_bool("study.self_check", true);
    if (p.epsilons.size() < 4) throw ConfigError("need at least four epsilon values", "study.epsilons");
    for (std::size_t i = 0; i < p.epsilons.size(); ++i) {
        if (!(p.epsilons[i] > 0.0)) throw ConfigError("epsilons must be positive", "study.epsilons");
        if (i && !(p.epsilons[i] < p.epsilons[i - 1])) throw ConfigError("epsilons must be decreasing", "study.epsilons");
    }
    if (p.replicas < 2) throw ConfigError("need at least two replicas", "study.replicas");
    if (!(p.dt_base > 0.0)) throw ConfigError("must be positive", "study.dt_base");
    return p;
}

namespace detail {

struct PairedError {
    std::optional<double> terminal;
    std::optional<double> half;
};

/// One replica: full run and averaged run on the same W1 stream; squared slow error at T/2 and T.
inline PairedError paired_error(const SystemConfig& cfg, const DriftProvider& drift, std::uint64_t seed,
                                std::uint32_t group, std::uint32_t replica, unsigned refinement) {
    IntegratorOptions opt;
    opt.record_energy = false;
    opt.noise_refinement = refinement;
    const std::size_t steps = cfg.steps();
    opt.stride = steps % 2 == 0 ? steps / 2 : steps;
    PairedError out;
    try {
        const auto streams = make_streams(seed, group, replica);
        const auto full = integrate_full(cfg, streams, opt);
        const auto avg = integrate_averaged(cfg, drift, NoiseStream(seed, {group, replica, Channel::W1}), opt);
        out.terminal = slow_error(full.back().slow, avg.trajectory.back().slow);
        if (steps % 2 == 0) out.half = slow_error(full[1].slow, avg.trajectory[1].slow);
    } catch (const IntegratorBlowup&) {
        out.terminal.reset();
        out.half.reset();
    }
    return out;
}

} // namespace detail

/**
 * @brief Strong-error study: per epsilon, M replicas of the paired full and
 * averaged runs, delta = sqrt(epsilon) recorded, dt(eps) = min(dt_base, eps/10)
 * shrunk to divide T. Fits log mse against log eps.
 */
inline RateReport run_rate_study(const SystemConfig& base, const DriftProvider& drift, const RateStudyParams& p,
                                 std::uint64_t seed, unsigned threads) {
    base.validate();
    const std::size_t ne = p.epsilons.size();
    std::vector<SystemConfig> cfgs(ne, base);
    for (std::size_t i = 0; i < ne; ++i) {
        cfgs[i].epsilon = p.epsilons[i];
        cfgs[i].dt = detail::fit_step(base.horizon, std::min(p.dt_base, p.epsilons[i] / 10.0));
    }
    std::vector<detail::PairedError> results(ne * p.replicas);
    parallel_for(results.size(), threads, [&](std::size_t task) {
        const std::size_t e = task / p.replicas, m = task % p.replicas;
        results[task] = detail::paired_error(cfgs[e], drift, seed, static_cast<std::uint32_t>(e + 1),
                                             static_cast<std::uint32_t>(m), 1);
    });

    RateReport rep;
    std::vector<double> xs, ys, xh, yh;
    for (std::size_t e = 0; e < ne; ++e) {
        std::vector<std::optional<double>> term, half;
        for (std::size_t m = 0; m < p.replicas; ++m) {
            term.push_back(results[e * p.replicas + m].terminal);
            half.push_back(results[e * p.replicas + m].half);
        }
        const auto t = detail::summarize(term);
        const auto h = detail::summarize(half);
        RateRow r;
        r.epsilon = p.epsilons[e];
        r.delta = std::sqrt(p.epsilons[e]);
        r.dt = cfgs[e].dt;
        r.replicas = p.replicas;
        r.aborted = p.replicas - t.n;
        r.mse_mean = t.mean;
        r.mse_stderr = t.stderr;
        r.half_mean = h.mean;
        r.half_stderr = h.stderr;
        rep.rows.push_back(r);
        if (100 * r.aborted >= p.replicas) {
            rep.valid = false;
            rep.flags.push_back("aborted replicas >= 1% at epsilon " + format_double(r.epsilon));
        }
        if (p.stderr_target && r.mse_mean > 0.0 && r.mse_stderr > *p.stderr_target * r.mse_mean)
            rep.flags.push_back("insufficient replicas for stderr target at epsilon " + format_double(r.epsilon));
        if (r.mse_mean > 0.0) {
            xs.push_back(r.epsilon);
            ys.push_back(r.mse_mean);
        }
        if (h.n > 0 && h.mean > 0.0) {
            xh.push_back(r.epsilon);
            yh.push_back(h.mean);
        }
    }
    if (xs.size() >= 3) {
        rep.fit = stats::fit_loglog_slope(xs, ys);
    } else {
        rep.valid = false;
        rep.flags.push_back("too few positive error means to fit a slope");
    }
    if (xh.size() >= 3) rep.fit_half = stats::fit_loglog_slope(xh, yh);

    for (std::size_t e = 1; e < ne; ++e) {
        const auto& a = rep.rows[e - 1];
        const auto& b = rep.rows[e];
        const double band = 2.0 * std::hypot(a.mse_stderr, b.mse_stderr);
        if (b.mse_mean > a.mse_mean + band) rep.monotone = false;
    }
    if (!rep.monotone) rep.flags.push_back("mse not monotone in epsilon beyond 2 stderr");

    if (p.self_check) {
        // Same Brownian paths at dt and dt/2: refinement 2 at dt sums the two increments used at dt/2.
        const std::size_t e = ne - 1;
        auto fine = cfgs[e];
        fine.dt = cfgs[e].dt / 2.0;
        constexpr std::uint32_t group = 0xFFFF;
        std::vector<std::optional<double>> coarse_err(p.replicas), fine_err(p.replicas);
        parallel_for(2 * p.replicas, threads, [&](std::size_t task) {
            const std::size_t m = task / 2;
            if (task % 2 == 0)
                coarse_err[m] = detail::paired_error(cfgs[e], drift, seed, group, static_cast<std::uint32_t>(m), 2).terminal;
            else
                fine_err[m] = detail::paired_error(fine, drift, seed, group, static_cast<std::uint32_t>(m), 1).terminal;
        });
        const auto c = detail::summarize(coarse_err);
        const auto f = detail::summarize(fine_err);
        rep.self_check_change = c.mean > 0.0 ? std::abs(f.mean - c.mean) / c.mean : 0.0;
        if (!(rep.self_check_change < 0.1)) {
            rep.valid = false;
            rep.flags.push_back("dt-halving self-check changed the error by >= 10%");
        }
    }
    return rep;
}

inline CsvTable rate_table(const RateReport& r) {
    CsvTable t({"epsilon", "delta", "dt", "replicas", "aborted", "mse_mean", "mse_stderr"});
    for (const auto& row : r.rows)
        t.row().add(row.epsilon).add(row.delta).add(row.dt).add(row.replicas).add(row.aborted).add(row.mse_mean).add(
            row.mse_stderr);
    return t;
}

inline CsvTable rate_summary_table(const RateReport& r) {
    CsvTable t({"slope", "ci_low", "ci_high", "slope_half", "ci_low_half", "ci_high_half", "self_check_change",
                "monotone", "valid", "flags"});
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : "; ") + f;
    t.row()
        .add(r.fit.slope)
        .add(r.fit.ci_low)
        .add(r.fit.ci_high)
        .add(r.fit_half.slope)
        .add(r.fit_half.ci_low)
        .add(r.fit_half.ci_high)
        .add(r.self_check_change)
        .add(r.monotone)
        .add(r.valid)
        .add(flags);
    return t;
}

// ---------------------------------------------------------------- sweeps

struct ErrorCurve {
    std::string name;
    std::vector<double> abscissa;
    std::vector<double> mean;
    std::vector<double> stderr;
    stats::LinearFit fit;  // log-log
};

namespace detail {
inline void fit_curve(ErrorCurve& c) {
    c.fit = stats::fit_loglog_slope(c.abscissa, c.mean);
}
} // namespace detail

/**
 * @brief delta-sweep of the auxiliary processes. For each delta all replicas
 * reuse the same W1/W2 paths. Curves: *_end at the horizon, *_avg averaged
 * over the sample grid (0, T].
 */
inline std::vector<ErrorCurve> khasminskii_sweep(const SystemConfig& cfg, const std::vector<double>& deltas,
                                                 std::size_t replicas, std::uint64_t seed, unsigned threads,
                                                 std::uint32_t group = 0x100) {
    cfg.validate();
    if (deltas.size() < 3) throw ConfigError("need at least three deltas", "lemma.deltas");
    const std::size_t nd = deltas.size();
    // per task: y, x, v at end and time-averaged
    std::vector<std::array<double, 6>> res(nd * replicas);
    parallel_for(res.size(), threads, [&](std::size_t task) {
        const std::size_t d = task / replicas, m = task % replicas;
        IntegratorOptions opt;
        opt.record_energy = false;
        const auto run = integrate_auxiliary(cfg, deltas[d], make_streams(seed, group, static_cast<std::uint32_t>(m)), opt);
        std::array<double, 6> r{};
        const std::size_t n = run.full.size();
        for (std::size_t i = 1; i < n; ++i) {
            const auto& a = run.full[i];
            const auto& b = run.auxiliary[i];
            r[3] += sobolev_norm_squared(a.fast - b.fast, 0.0);
            r[4] += sobolev_norm_squared(a.slow.position - b.slow.position, 1.0);
            r[5] += sobolev_norm_squared(a.slow.velocity - b.slow.velocity, 0.0);
        }
        for (std::size_t k = 3; k < 6; ++k) r[k] /= static_cast<double>(n - 1);
        const auto& a = run.full.back();
        const auto& b = run.auxiliary.back();
        r[0] = sobolev_norm_squared(a.fast - b.fast, 0.0);
        r[1] = sobolev_norm_squared(a.slow.position - b.slow.position, 1.0);
        r[2] = sobolev_norm_squared(a.slow.velocity - b.slow.velocity, 0.0);
        res[task] = r;
    });
    static const char* names[6] = {"y_end", "x_end", "v_end", "y_avg", "x_avg", "v_avg"};
    std::vector<ErrorCurve> out(6);
    for (std::size_t k = 0; k < 6; ++k) {
        out[k].name = names[k];
        for (std::size_t d = 0; d < nd; ++d) {
            std::vector<double> col(replicas);
            for (std::size_t m = 0; m < replicas; ++m) col[m] = res[d * replicas + m][k];
            out[k].abscissa.push_back(deltas[d]);
            out[k].mean.push_back(stats::mean(col));
            out[k].stderr.push_back(stats::stderr_of_mean(col));
        }
        detail::fit_curve(out[k]);
    }
    return out;
}

/// h-sweep of E||X_{t+h} - X_t||^2 on one path per replica (common noise across h).
inline ErrorCurve regularity_sweep(SystemConfig cfg, double t0, const std::vector<double>& hs, std::size_t replicas,
                                   std::uint64_t seed, unsigned threads, std::uint32_t group = 0x200) {
    if (hs.size() < 3) throw ConfigError("need at least three increments", "lemma.reg_steps");
    cfg.horizon = t0 + *std::max_element(hs.begin(), hs.end());
    cfg.dt = detail::fit_step(cfg.horizon, cfg.dt);
    cfg.validate();
    std::vector<std::vector<double>> res(replicas);
    parallel_for(replicas, threads, [&](std::size_t m) {
        IntegratorOptions opt;
        opt.record_energy = false;
        const auto tr = integrate_full(cfg, make_streams(seed, group, static_cast<std::uint32_t>(m)), opt);
        const auto& base = detail::at_time(tr, t0);
        std::vector<double> r;
        for (double h : hs)
            r.push_back(sobolev_norm_squared(detail::at_time(tr, t0 + h).slow.position - base.slow.position, 0.0));
        res[m] = std::move(r);
    });
    ErrorCurve c;
    c.name = "x_increment";
    for (std::size_t j = 0; j < hs.size(); ++j) {
        std::vector<double> col(replicas);
        for (std::size_t m = 0; m < replicas; ++m) col[m] = res[m][j];
        c.abscissa.push_back(hs[j]);
        c.mean.push_back(stats::mean(col));
        c.stderr.push_back(stats::stderr_of_mean(col));
    }
    detail::fit_curve(c);
    return c;
}

struct APrioriBounds {
    double sup_slow = 0.0;  // sup_t E(||X||_1^2 + ||V||^2)
    double sup_fast = 0.0;  // sup_t E||Y||^2
    std::size_t aborted = 0;
};

inline APrioriBounds a_priori_bounds(const SystemConfig& cfg, std::size_t replicas, std::uint64_t seed,
                                     unsigned threads, std::uint32_t group = 0x300) {
    cfg.validate();
    std::vector<std::optional<std::pair<std::vector<double>, std::vector<double>>>> res(replicas);
    parallel_for(replicas, threads, [&](std::size_t m) {
        IntegratorOptions opt;
        opt.record_energy = false;
        try {
            const auto tr = integrate_full(cfg, make_streams(seed, group, static_cast<std::uint32_t>(m)), opt);
            std::vector<double> s, f;
            for (const auto& smp : tr) {
                s.push_back(energy(smp.slow));
                f.push_back(sobolev_norm_squared(smp.fast, 0.0));
            }
            res[m] = std::make_pair(std::move(s), std::move(f));
        } catch (const IntegratorBlowup&) {
        }
    });
    APrioriBounds b;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> ok;
    for (auto& r : res) {
        if (r) ok.push_back(std::move(*r));
        else ++b.aborted;
    }
    if (ok.empty()) {
        b.sup_slow = b.sup_fast = std::numeric_limits<double>::infinity();
        return b;
    }
    const std::size_t ns = ok.front().first.size();
    for (std::size_t i = 0; i < ns; ++i) {
        std::vector<double> s(ok.size()), f(ok.size());
        for (std::size_t m = 0; m < ok.size(); ++m) {
            s[m] = ok[m].first[i];
            f[m] = ok[m].second[i];
        }
        b.sup_slow = std::max(b.sup_slow, stats::mean(s));
        b.sup_fast = std::max(b.sup_fast, stats::mean(f));
    }
    if (b.aborted) b.sup_slow = b.sup_fast = std::numeric_limits<double>::infinity();
    return b;
}

struct MomentStudy {
    std::vector<double> x_norm_sq;
    std::vector<double> moment;
    std::vector<double> stderr;
    stats::LinearFit fit;  // log moment vs log ||x||^2 over the nonzero grid points
};

/// Invariant second moment int ||y||^2 mu^x(dy) at x = m e_1 for m in the grid.
inline MomentStudy invariant_moment_study(const CoefficientSet& c, const NoiseSpec& noise, const std::vector<double>& grid,
                                          const DriftBudget& budget, std::uint64_t seed, unsigned threads,
                                          std::uint32_t group = 0x400) {
    MomentStudy s;
    s.x_norm_sq.resize(grid.size());
    s.moment.resize(grid.size());
    s.stderr.resize(grid.size());
    const Functional phi = [](const SpectralField& y) { return std::vector<double>{sobolev_norm_squared(y, 0.0)}; };
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        const auto x = SpectralField::mode(1, grid[i], c.n_modes, c.length);
        const auto e = estimate_invariant_mean(x, phi, c, noise, budget,
                                               NoiseStream(seed, {group, static_cast<std::uint32_t>(i), Channel::Frozen}));
        s.x_norm_sq[i] = grid[i] * grid[i];
        s.moment[i] = e.value[1];
        s.stderr[i] = e.stderr;
    });
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (s.x_norm_sq[i] > 0.0) {
            xs.push_back(s.x_norm_sq[i]);
            ys.push_back(s.moment[i]);
        }
    s.fit = stats::fit_loglog_slope(xs, ys);
    return s;
}

// ---------------------------------------------------------------- validate

inline std::string assumption_report_text(const AssumptionReport& r, const CoefficientSet& c) {
    std::ostringstream o;
    const auto& d = c.constants;
    const auto& e = r.estimated;
    o << "fixture=" << c.name << '\n';
    o << "kappa=" << format_double(r.kappa) << '\n';
    o << "fatal=" << (r.fatal ? "true" : "false") << '\n';
    auto pair = [&](const char* name, double declared, double est) {
        o << name << ".declared=" << format_double(declared) << '\n';
        o << name << ".estimated=" << format_double(est) << '\n';
    };
    pair("L_f", d.L_f, e.L_f);
    pair("M_f", d.M_f, e.M_f);
    pair("C_g", d.C_g, e.C_g);
    pair("L_g", d.L_g, e.L_g);
    pair("C_b", d.C_b, e.C_b);
    pair("L_b", d.L_b, e.L_b);
    pair("L_sigma", d.L_sigma, e.L_sigma);
    o << "violations=" << r.violations.size() << '\n';
    for (const auto& v : r.violations) o << "violation=" << v << '\n';
    for (const auto& n : r.notes) o << "note=" << n << '\n';
    return o.str();
}

// ---------------------------------------------------------------- lemma checks

struct CheckRow {
    std::string check;
    double measured = 0.0;
    double band_low = 0.0;
    double band_high = 0.0;
    std::string verdict;  // pass | fail | skipped: <reason>
};

inline CsvTable checks_table(const std::vector<CheckRow>& rows) {
    CsvTable t({"check", "measured", "band_low", "band_high", "verdict"});
    for (const auto& r : rows) t.row().add(r.check).add(r.measured).add(r.band_low).add(r.band_high).add(r.verdict);
    return t;
}

namespace detail {
inline CheckRow banded(std::string name, double measured, double lo, double hi) {
    const bool ok = std::isfinite(measured) && measured >= lo && measured <= hi;
    return {std::move(name), measured, lo, hi, ok ? "pass" : "fail"};
}
} // namespace detail

/**
 * @brief Slope and bound checks for one fixture configuration.
 * When kappa <= 0 every check after the dissipativity row is skipped.
 */
inline std::vector<CheckRow> run_lemma_checks(const Config& cfg, std::uint64_t seed, unsigned threads) {
    const auto sys = system_from_config(cfg);
    const auto& c = sys.coefficients;
    const auto& noise = sys.noise;
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t n = sys.n_modes;
    const double len = sys.length;
    std::vector<CheckRow> rows;

    const auto report = validate_assumptions(c, noise, cfg.get_size("lemma.probes", 32),
                                             NoiseStream(seed, {0x500, 0, Channel::Probe}));
    const double kappa = report.kappa;
    rows.push_back(detail::banded("dissipativity_kappa", kappa, std::numeric_limits<double>::min(), inf));
    rows.push_back(detail::banded("declared_constants_violations",
                                  static_cast<double>(report.violations.size() - (report.fatal ? 1 : 0)), 0.0, 0.0));

    static const char* downstream[] = {
        "a_priori_sup_slow", "a_priori_sup_fast", "time_regularity_slope", "khasminskii_y_slope",
        "khasminskii_x_slope", "khasminskii_v_slope", "invariant_moment_slope", "mixing_exponent",
        "first_variation_ratio_spread", "drift_relaxation_exponent", "estimator_consistency", "avg_drift_lipschitz"};
    if (!(kappa > 0.0)) {
        for (const char* name : downstream)
            rows.push_back({name, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                            std::numeric_limits<double>::quiet_NaN(), "skipped: kappa nonpositive"});
        return rows;
    }

    const std::size_t M = cfg.get_size("lemma.replicas", 64);
    const double lemma_dt = cfg.get_double("lemma.dt", 1e-3);

    // a priori suprema over [0, T]
    {
        auto s = sys;
        const auto b = a_priori_bounds(s, M, seed, threads);
        rows.push_back(detail::banded("a_priori_sup_slow", b.sup_slow, 0.0, inf));
        rows.push_back(detail::banded("a_priori_sup_fast", b.sup_fast, 0.0, inf));
    }
    // time regularity, one row per epsilon
    {
        const auto eps_list = cfg.get_list("lemma.reg_epsilons", std::vector<double>{0.1, 0.01});
        const auto hs = cfg.get_list("lemma.reg_steps", std::vector<double>{0.02, 0.04, 0.08});
        const double t0 = cfg.get_double("lemma.reg_time", 0.5);
        for (std::size_t i = 0; i < eps_list.size(); ++i) {
            auto s = sys;
            s.epsilon = eps_list[i];
            s.dt = std::min(lemma_dt, eps_list[i] / 10.0);
            const auto curve = regularity_sweep(s, t0, hs, M, seed, threads, 0x200 + static_cast<std::uint32_t>(i));
            auto row = detail::banded("time_regularity_slope", curve.fit.slope, 1.7, 2.3);
            row.check += "@eps=" + detail::short_double(eps_list[i]);
            rows.push_back(row);
        }
    }
    // Khasminskii delta-sweep
    {
        auto s = sys;
        s.epsilon = cfg.get_double("lemma.epsilon", 1e-2);
        s.dt = std::min(lemma_dt, s.epsilon / 10.0);
        s.horizon = cfg.get_double("lemma.horizon", 1.0);
        s.dt = detail::fit_step(s.horizon, s.dt);
        const auto deltas = cfg.get_list("lemma.deltas", std::vector<double>{0.02, 0.04, 0.08});
        const auto curves = khasminskii_sweep(s, deltas, M, seed, threads);
        rows.push_back(detail::banded("khasminskii_y_slope", curves[3].fit.slope, 1.6, 2.4));
        rows.push_back(detail::banded("khasminskii_x_slope", curves[4].fit.slope, 1.6, 2.4));
        rows.push_back(detail::banded("khasminskii_v_slope", curves[5].fit.slope, 1.6, 2.4));
    }

    auto budget = budget_from_config(cfg, kappa);
    if (cfg.has("lemma.moment_horizon")) budget.horizon = cfg.get_double("lemma.moment_horizon");
    // invariant second moment vs ||x||^2
    {
        const auto grid = cfg.get_list("lemma.moment_grid", std::vector<double>{0.0, 1.0, 2.0, 4.0});
        const auto st = invariant_moment_study(c, noise, grid, budget, seed, threads);
        rows.push_back(detail::banded("invariant_moment_slope", st.fit.slope, -inf, 1.2));
    }
    const auto x1 = SpectralField::mode(1, 1.0, n, len);
    // mixing under synchronous coupling
    {
        const auto y = cfg.has("mixing.y") ? cfg.get_field("mixing.y", n, len) : SpectralField::mode(1, 1.0, n, len);
        const auto y2 = cfg.has("mixing.y2") ? cfg.get_field("mixing.y2", n, len) : SpectralField::mode(1, -1.0, n, len);
        const double T = cfg.get_double("mixing.horizon", 4.0);
        const double dt = cfg.get_double("mixing.dt", 0.01);
        const auto rep = estimate_mixing(x1, y, y2, T, dt, cfg.get_size("mixing.replicas", 16), c, noise,
                                         NoiseStream(seed, {0x600, 0, Channel::Frozen}));
        // the exact exponent is known when b does not depend on y
        if (c.ou) {
            const double exact = 2.0 * (eigenvalue(1, len) + c.ou->gamma);
            rows.push_back(detail::banded("mixing_exponent", rep.exponent, exact - 0.15, exact + 0.15));
        } else {
            rows.push_back(detail::banded("mixing_exponent", rep.exponent, kappa - 0.1, inf));
        }
    }
    // first variation: sup E||zeta||^2 / ||h||^2 across ||h|| in {0.1, 1, 10}
    {
        std::vector<double> ratios;
        for (double s : {0.1, 1.0, 10.0}) {
            const auto h = SpectralField::mode(1, s, n, len);
            const auto fv = first_variation(x1, SpectralField::zeros(n, len), h, detail::on_grid(10.0 / kappa, 0.01), 0.01,
                                            16, c, noise, NoiseStream(seed, {0x700, 0, Channel::Frozen}));
            ratios.push_back(fv.sup_mean_sq / (s * s));
        }
        const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
        rows.push_back(detail::banded("first_variation_ratio_spread", (*hi - *lo) / *hi, 0.0, 0.05));
    }
    // relaxation of E f(x, Y_t) toward fbar
    AveragedDriftEstimate ta;
    {
        ta = estimate_avg_drift(x1, c, noise, budget, NoiseStream(seed, {0x800, 0, Channel::Drift}));
        const auto fbar = c.ou ? closed_form_avg_drift(x1, c) : ta.value;
        const auto rel = estimate_drift_relaxation(x1, SpectralField::zeros(n, len), fbar,
                                                   detail::on_grid(4.0 / kappa, 0.01), 0.01, 256, c, noise,
                                                   NoiseStream(seed, {0x800, 1, Channel::Frozen}), 10);
        rows.push_back(detail::banded("drift_relaxation_exponent", rel.exponent, std::numeric_limits<double>::min(), inf));
    }
    // time-average vs ensemble estimator
    {
        auto eb = budget;
        eb.method = DriftBudget::Method::Ensemble;
        eb.replicas = cfg.get_size("drift.replicas", 256);
        const auto ens = estimate_avg_drift(x1, c, noise, eb, NoiseStream(seed, {0x800, 2, Channel::Drift}));
        const double gap = sobolev_norm(ta.value - ens.value, 0.0);
        const double se = std::hypot(ta.stderr, ens.stderr);
        rows.push_back(detail::banded("estimator_consistency", se > 0.0 ? gap / se : 0.0, 0.0, 3.0));
    }
    // Lipschitz ratio of fbar over random pairs
    {
        const std::size_t pairs = cfg.get_size("lemma.lipschitz_pairs", c.ou ? 100 : 10);
        NoiseStream probe(seed, {0x900, 0, Channel::Probe});
        std::vector<std::pair<SpectralField, SpectralField>> pts;
        for (std::size_t i = 0; i < pairs; ++i) {
            std::vector<double> a(n), b(n);
            for (auto& v : a) v = probe.normal();
            for (auto& v : b) v = probe.normal();
            pts.emplace_back(SpectralField(a, len), SpectralField(b, len));
        }
        auto lb = budget;
        lb.horizon = std::min(budget.horizon, lb.burn_in + 200.0);
        lb.horizon = std::ceil(lb.horizon / lb.dt) * lb.dt;
        std::vector<double> ratio(pairs);
        parallel_for(pairs, threads, [&](std::size_t i) {
            const auto& [a, b] = pts[i];
            SpectralField fa, fb;
            if (c.ou) {
                fa = closed_form_avg_drift(a, c);
                fb = closed_form_avg_drift(b, c);
            } else {
                // common random numbers for both points
                fa = estimate_avg_drift(a, c, noise, lb, NoiseStream(seed, {0x900, 1, Channel::Drift})).value;
                fb = estimate_avg_drift(b, c, noise, lb, NoiseStream(seed, {0x900, 1, Channel::Drift})).value;
            }
            ratio[i] = sobolev_norm(fa - fb, 0.0) / sobolev_norm(a - b, 0.0);
        });
        const double mx = *std::max_element(ratio.begin(), ratio.end());
        const double bound = c.ou ? 1.0 / (eigenvalue(1, len) + c.ou->gamma) : inf;
        rows.push_back(detail::banded("avg_drift_lipschitz", mx, 0.0, bound * (1.0 + 1e-12)));
    }
    return rows;
}

} // namespace spdeavg
