#pragma once

/**
 * @brief Flat experiment configuration: `key = value` lines, optional
 * `[section]` headers prefixing following keys with `section.`, `#` comments.
 *
 * Field values are sparse mode lists, e.g. `x0 = 1:1.0, 3:-0.25`.
 */

#include "coupled_solver.hpp"
#include "errors.hpp"
#include "frozen_fast.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace spdeavg {

/// Every key the tools understand.
inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "domain.length", "domain.modes",
        "model.fixture", "model.gamma", "model.sigma1", "model.sigma2", "model.a", "model.L_b",
        "noise1.family", "noise1.c", "noise1.p", "noise1.rho", "noise1.m",
        "noise2.family", "noise2.c", "noise2.p", "noise2.rho", "noise2.m",
        "time.horizon", "time.dt", "time.epsilon", "time.c_fast", "time.noise_refinement", "time.exact_wave_variance",
        "initial.x0", "initial.v0", "initial.y0",
        "output.stride",
        "study.epsilons", "study.replicas", "study.dt_base", "study.stderr_target", "study.self_check",
        "drift.provider", "drift.method", "drift.burn_in", "drift.horizon", "drift.dt", "drift.batches",
        "drift.replicas", "drift.terminal", "drift.x",
        "mixing.x", "mixing.y", "mixing.y2", "mixing.horizon", "mixing.dt", "mixing.replicas", "mixing.stride",
        "lemma.replicas", "lemma.epsilon", "lemma.deltas", "lemma.horizon", "lemma.dt", "lemma.reg_epsilons",
        "lemma.reg_time", "lemma.reg_steps", "lemma.moment_grid", "lemma.moment_horizon", "lemma.lipschitz_pairs",
        "lemma.probes",
    };
    return keys;
}

class Config {
public:
    Config() = default;

    static Config parse(std::string_view text, const std::string& source = "<string>") {
        Config cfg;
        std::string section;
        std::size_t lineno = 0;
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
            const auto s = trim(line);
            if (s.empty()) continue;
            const std::string where = source + ":" + std::to_string(lineno);
            if (s.front() == '[') {
                if (s.back() != ']') throw ConfigError("malformed section header at " + where, std::string(s));
                section = std::string(trim(s.substr(1, s.size() - 2)));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string_view::npos) throw ConfigError("expected key = value at " + where, std::string(s));
            std::string key(trim(s.substr(0, eq)));
            if (key.empty()) throw ConfigError("empty key at " + where, "");
            if (!section.empty()) key = section + "." + key;
            if (!known_config_keys().contains(key)) throw ConfigError("unknown key at " + where, key);
            if (cfg.values_.contains(key)) throw ConfigError("duplicate key at " + where, key);
            cfg.values_[key] = std::string(trim(s.substr(eq + 1)));
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot open configuration file '" + path.string() + "'", "--config");
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    void set(const std::string& key, const std::string& value) {
        if (!known_config_keys().contains(key)) throw ConfigError("unknown key", key);
        values_[key] = value;
    }

    std::string get_string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
        const auto it = values_.find(key);
        if (it != values_.end()) return it->second;
        if (fallback) return *fallback;
        throw ConfigError("missing required key", key);
    }

    double get_double(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            if (fallback) return *fallback;
            throw ConfigError("missing required key", key);
        }
        return to_double(it->second, key);
    }

    std::size_t get_size(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            if (fallback) return *fallback;
            throw ConfigError("missing required key", key);
        }
        std::size_t v = 0;
        const auto& s = it->second;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            throw ConfigError("expected a nonnegative integer, got '" + s + "'", key);
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("expected true/false, got '" + it->second + "'", key);
    }

    std::vector<double> get_list(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            if (fallback) return *fallback;
            throw ConfigError("missing required key", key);
        }
        std::vector<double> out;
        for (const auto& item : split(it->second, ',')) out.push_back(to_double(item, key));
        if (out.empty()) throw ConfigError("empty list", key);
        return out;
    }

    /// Sparse mode list "k:c, k:c"; absent key gives the zero field.
    SpectralField get_field(const std::string& key, std::size_t n_modes, double length) const {
        std::vector<double> v(n_modes, 0.0);
        const auto it = values_.find(key);
        if (it != values_.end()) {
            for (const auto& item : split(it->second, ',')) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError("expected mode:value, got '" + item + "'", key);
                std::size_t k = 0;
                const auto ks = std::string(trim(std::string_view(item).substr(0, colon)));
                const auto r = std::from_chars(ks.data(), ks.data() + ks.size(), k);
                if (r.ec != std::errc{} || r.ptr != ks.data() + ks.size() || k == 0 || k > n_modes)
                    throw ConfigError("mode index out of range 1.." + std::to_string(n_modes), key);
                v[k - 1] = to_double(item.substr(colon + 1), key);
            }
        }
        return SpectralField(std::move(v), length);
    }

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (start <= s.size()) {
            const auto pos = s.find(sep, start);
            const auto piece = trim(std::string_view(s).substr(start, pos == std::string::npos ? std::string::npos : pos - start));
            if (!piece.empty()) out.emplace_back(piece);
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    }

    // accepts decimal literals and the tokens pi, 2pi
    static double to_double(const std::string& raw, const std::string& key) {
        const auto s = std::string(trim(raw));
        if (s == "pi") return std::numbers::pi;
        if (s == "2pi") return 2.0 * std::numbers::pi;
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty())
            throw ConfigError("expected a number, got '" + s + "'", key);
        return v;
    }

    std::map<std::string, std::string> values_;
};

inline DecayProfile decay_from_config(const Config& cfg, const std::string& section) {
    const auto fam = cfg.get_string(section + ".family", "polynomial");
    const double c = cfg.get_double(section + ".c", 1.0);
    if (fam == "polynomial") return DecayProfile::polynomial(c, cfg.get_double(section + ".p", 2.0));
    if (fam == "exponential") return DecayProfile::exponential(c, cfg.get_double(section + ".rho", 0.5));
    if (fam == "flat") return DecayProfile::flat(c, cfg.get_size(section + ".m", 1));
    throw ConfigError("unknown spectrum family '" + fam + "'", section + ".family");
}

inline NoiseSpec noise_from_config(const Config& cfg) {
    const std::size_t n = cfg.get_size("domain.modes", 16);
    return make_noise_spec(decay_from_config(cfg, "noise1"), decay_from_config(cfg, "noise2"), n);
}

inline CoefficientSet coefficients_from_config(const Config& cfg, const NoiseSpec& noise) {
    const std::size_t n = cfg.get_size("domain.modes", 16);
    const double len = cfg.get_double("domain.length", std::numbers::pi);
    FixtureParams p;
    for (const char* k : {"gamma", "sigma1", "sigma2", "a", "L_b"})
        if (cfg.has(std::string("model.") + k)) p[k] = cfg.get_double(std::string("model.") + k);
    return make_fixture(cfg.get_string("model.fixture", "linear_ou"), p, n, len, noise);
}

inline SystemConfig system_from_config(const Config& cfg) {
    SystemConfig s;
    s.length = cfg.get_double("domain.length", std::numbers::pi);
    s.n_modes = cfg.get_size("domain.modes", 16);
    if (!(s.length > 0.0)) throw ConfigError("must be positive", "domain.length");
    if (s.n_modes == 0) throw ConfigError("must be >= 1", "domain.modes");
    s.noise = noise_from_config(cfg);
    s.coefficients = coefficients_from_config(cfg, s.noise);
    s.epsilon = cfg.get_double("time.epsilon", 1e-2);
    s.horizon = cfg.get_double("time.horizon", 1.0);
    s.dt = cfg.get_double("time.dt", 1e-3);
    s.c_fast = cfg.get_double("time.c_fast", 0.1);
    s.initial.x0 = cfg.get_field("initial.x0", s.n_modes, s.length);
    s.initial.v0 = cfg.get_field("initial.v0", s.n_modes, s.length);
    s.initial.y0 = cfg.get_field("initial.y0", s.n_modes, s.length);
    s.validate();
    return s;
}

inline IntegratorOptions options_from_config(const Config& cfg) {
    IntegratorOptions o;
    o.stride = cfg.get_size("output.stride", 1);
    if (o.stride == 0) throw ConfigError("must be >= 1", "output.stride");
    const auto r = cfg.get_size("time.noise_refinement", 1);
    if (r == 0 || (r & (r - 1)) != 0) throw ConfigError("must be a power of two", "time.noise_refinement");
    o.noise_refinement = static_cast<unsigned>(r);
    o.exact_wave_variance = cfg.get_bool("time.exact_wave_variance", false);
    o.record_energy = !o.exact_wave_variance;
    return o;
}

/// Drift budget: defaults from kappa, overridden by drift.* keys.
inline DriftBudget budget_from_config(const Config& cfg, double kappa) {
    DriftBudget b = kappa > 0.0 ? DriftBudget::defaults(kappa) : DriftBudget{};
    const auto m = cfg.get_string("drift.method", "time_average");
    if (m == "time_average") b.method = DriftBudget::Method::TimeAverage;
    else if (m == "ensemble") b.method = DriftBudget::Method::Ensemble;
    else throw ConfigError("expected time_average or ensemble, got '" + m + "'", "drift.method");
    b.burn_in = cfg.get_double("drift.burn_in", b.burn_in);
    b.horizon = cfg.get_double("drift.horizon", b.horizon);
    b.dt = cfg.get_double("drift.dt", b.dt);
    b.batches = cfg.get_size("drift.batches", b.batches);
    b.replicas = cfg.get_size("drift.replicas", b.replicas);
    b.terminal = cfg.get_double("drift.terminal", b.terminal);
    if (b.method == DriftBudget::Method::TimeAverage && !(b.horizon > b.burn_in))
        throw ConfigError("horizon must exceed burn-in", "drift.horizon");
    return b;
}

} // namespace spdeavg
