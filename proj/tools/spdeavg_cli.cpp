// spdeavg: command-line front end.

#include <spdeavg/spdeavg.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
    std::string config;
    std::uint64_t seed = 1;
    std::optional<unsigned> threads;
    std::string out = ".";
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "experiment configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--threads", f.threads, "worker threads (default: SPDE_THREADS or 1)");
    sub->add_option("--out", f.out, "output directory");
}

std::filesystem::path out_path(const CommonFlags& f, const std::string& name) {
    return std::filesystem::path(f.out) / name;
}

} // namespace

int main(int argc, char** argv) {
    using namespace spdeavg;
    CLI::App app{"Slow-fast stochastic wave/heat system: simulation and averaging studies"};
    app.require_subcommand(1);

    CommonFlags flags;
    bool averaged = false;

    auto* sim = app.add_subcommand("simulate", "integrate one trajectory, write trajectory.csv");
    add_common(sim, flags);
    sim->add_flag("--averaged", averaged, "integrate the averaged equation instead (averaged.csv)");

    auto* drift = app.add_subcommand("avg-drift", "estimate fbar(x) at drift.x, write avg_drift.csv");
    add_common(drift, flags);

    auto* mix = app.add_subcommand("mixing", "synchronous-coupling decay of the frozen equation, write mixing.csv");
    add_common(mix, flags);

    auto* rate = app.add_subcommand("rate-study", "strong-error rate study, write rate_study.csv and rate_summary.csv");
    add_common(rate, flags);

    auto* val = app.add_subcommand("validate", "check declared constants, print key=value report");
    add_common(val, flags);

    auto* lem = app.add_subcommand("lemma-checks", "slope and bound checks, write lemma_checks.csv");
    add_common(lem, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = Config::load(flags.config);
        const unsigned threads = resolve_threads(flags.threads);

        if (sim->parsed()) {
            const auto sys = system_from_config(cfg);
            const auto opt = options_from_config(cfg);
            if (averaged) {
                const auto provider = provider_from_config(cfg, sys, flags.seed);
                simulate_averaged(sys, provider, opt, flags.seed).write(out_path(flags, "averaged.csv"));
            } else {
                simulate_full(sys, opt, flags.seed).write(out_path(flags, "trajectory.csv"));
            }
        } else if (drift->parsed()) {
            const auto sys = system_from_config(cfg);
            const auto& c = sys.coefficients;
            const auto x = cfg.has("drift.x") ? cfg.get_field("drift.x", sys.n_modes, sys.length)
                                              : SpectralField::mode(1, 1.0, sys.n_modes, sys.length);
            const auto budget = budget_from_config(cfg, dissipativity_margin(c));
            const auto est = estimate_avg_drift(x, c, sys.noise, budget, NoiseStream(flags.seed, {0, 0, Channel::Drift}));
            CsvTable t({"k", "value", "stderr"});
            for (std::size_t k = 1; k <= sys.n_modes; ++k) t.row().add(k).add(est.value[k]).add(est.mode_stderr[k - 1]);
            t.write(out_path(flags, "avg_drift.csv"));
            std::cout << "stderr_h=" << format_double(est.stderr) << '\n';
        } else if (mix->parsed()) {
            const auto sys = system_from_config(cfg);
            const auto n = sys.n_modes;
            const auto len = sys.length;
            const auto x = cfg.has("mixing.x") ? cfg.get_field("mixing.x", n, len) : SpectralField::mode(1, 1.0, n, len);
            const auto y = cfg.has("mixing.y") ? cfg.get_field("mixing.y", n, len) : SpectralField::mode(1, 1.0, n, len);
            const auto y2 = cfg.has("mixing.y2") ? cfg.get_field("mixing.y2", n, len) : SpectralField::mode(1, -1.0, n, len);
            const auto rep = estimate_mixing(x, y, y2, cfg.get_double("mixing.horizon", 4.0), cfg.get_double("mixing.dt", 0.01),
                                             cfg.get_size("mixing.replicas", 16), sys.coefficients, sys.noise,
                                             NoiseStream(flags.seed, {0, 0, Channel::Frozen}),
                                             cfg.get_size("mixing.stride", 1));
            CsvTable t({"t", "msd", "exponent"});
            for (std::size_t i = 0; i < rep.t.size(); ++i) t.row().add(rep.t[i]).add(rep.msd[i]).add(rep.exponent);
            t.write(out_path(flags, "mixing.csv"));
            if (rep.fully_contracted) std::cout << "fully contracted\n";
        } else if (rate->parsed()) {
            const auto sys = system_from_config(cfg);
            const auto provider = provider_from_config(cfg, sys, flags.seed);
            const auto rep = run_rate_study(sys, provider, rate_params_from_config(cfg), flags.seed, threads);
            rate_table(rep).write(out_path(flags, "rate_study.csv"));
            const auto summary = rate_summary_table(rep);
            summary.write(out_path(flags, "rate_summary.csv"));
            std::cout << summary.str();
        } else if (val->parsed()) {
            const auto sys = system_from_config(cfg);
            const auto rep = validate_assumptions(sys.coefficients, sys.noise, cfg.get_size("lemma.probes", 32),
                                                  NoiseStream(flags.seed, {0, 0, Channel::Probe}));
            std::cout << assumption_report_text(rep, sys.coefficients);
        } else if (lem->parsed()) {
            const auto rows = run_lemma_checks(cfg, flags.seed, threads);
            const auto t = checks_table(rows);
            t.write(out_path(flags, "lemma_checks.csv"));
            std::cout << t.str();
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const EstimationQualityError& e) {
        std::cerr << "estimation quality error: " << e.what() << '\n';
        return 3;
    } catch (const IntegratorBlowup& e) {
        std::cerr << "integrator blowup: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
