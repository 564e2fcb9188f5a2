#pragma once

/**
 * @brief Diagonal Q-Wiener processes in mode space.
 *
 * W^i_t = sum_k sqrt(lambda_{i,k}) beta_{i,k}(t) e_k with independent scalar
 * Brownian motions. Random numbers come from counter-based Philox4x32-10
 * streams keyed by (seed, group, replica, channel), so a replica can replay
 * exactly the W^1 path of another run without sharing any state.
 */

#include "errors.hpp"
#include "spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace spdeavg {

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter round(const Counter& c, const Key& k) {
    constexpr std::uint64_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    const std::uint64_t p0 = m0 * c[0];
    const std::uint64_t p1 = m1 * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
inline Counter philox4x32_10(Counter c, Key k) {
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k[0] += w0;
            k[1] += w1;
        }
        c = round(c, k);
    }
    return c;
}

} // namespace philox

/// What a random stream is used for. The value is part of the Philox counter.
enum class Channel : std::uint8_t {
    W1 = 1,      // slow-equation noise
    W2 = 2,      // fast-equation noise
    Drift = 3,   // Monte Carlo estimation of the averaged drift
    Probe = 4,   // random probing (assumption checks, random inputs)
    Frozen = 5,  // frozen-equation experiments
};

struct StreamId {
    std::uint32_t group = 0;    // e.g. epsilon index in a sweep; 24 bits used
    std::uint32_t replica = 0;
    Channel channel = Channel::W1;

    friend bool operator==(const StreamId&, const StreamId&) = default;
};

inline std::string to_string(const StreamId& id) {
    return "g" + std::to_string(id.group) + "/r" + std::to_string(id.replica) + "/c" +
           std::to_string(static_cast<int>(id.channel));
}

/**
 * @brief Reproducible stream of standard normal variates.
 *
 * Draw number i is a pure function of (seed, id, i); `position()` is i of the
 * next draw. Two normals come from each Philox block via Box-Muller.
 */
class NoiseStream {
public:
    NoiseStream() = default;
    NoiseStream(std::uint64_t seed, StreamId id) : seed_(seed), id_(id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    const StreamId& id() const noexcept { return id_; }
    std::uint64_t position() const noexcept { return position_; }

    void seek(std::uint64_t position) noexcept { position_ = position; }

    double normal() {
        const std::uint64_t block = position_ >> 1;
        if (!cached_ || block != cached_block_) fill(block);
        const double z = (position_ & 1u) ? cache_[1] : cache_[0];
        ++position_;
        return z;
    }

    /// Uniform in (0, 1), consuming one draw slot.
    double uniform() {
        const double z = normal();
        return 0.5 * std::erfc(-z / std::numbers::sqrt2);
    }

    friend bool operator==(const NoiseStream& a, const NoiseStream& b) {
        return a.seed_ == b.seed_ && a.id_ == b.id_ && a.position_ == b.position_;
    }

private:
    void fill(std::uint64_t block) {
        const philox::Counter ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), id_.replica,
                                  (id_.group << 8) | static_cast<std::uint32_t>(id_.channel)};
        const philox::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        const auto r = philox::philox4x32_10(ctr, key);
        const std::uint64_t a = (std::uint64_t{r[0]} << 32) | r[1];
        const std::uint64_t b = (std::uint64_t{r[2]} << 32) | r[3];
        constexpr double scale = 0x1.0p-53;
        const double u1 = (static_cast<double>(a >> 11) + 0.5) * scale;
        const double u2 = static_cast<double>(b >> 11) * scale;
        const double rad = std::sqrt(-2.0 * std::log(u1));
        cache_[0] = rad * std::cos(2.0 * std::numbers::pi * u2);
        cache_[1] = rad * std::sin(2.0 * std::numbers::pi * u2);
        cached_block_ = block;
        cached_ = true;
    }

    std::uint64_t seed_ = 0;
    StreamId id_{};
    std::uint64_t position_ = 0;
    std::uint64_t cached_block_ = 0;
    bool cached_ = false;
    std::array<double, 2> cache_{};
};

enum class NoiseIndex { Slow = 1, Fast = 2 };

/// Eigenvalues of the covariance operators Q1, Q2 (truncated) plus declared full traces.
class NoiseSpec {
public:
    NoiseSpec() = default;
    NoiseSpec(std::vector<double> lambda1, std::vector<double> lambda2, double trace1, double trace2)
        : lambda1_(std::move(lambda1)), lambda2_(std::move(lambda2)), trace1_(trace1), trace2_(trace2) {
        check(lambda1_, trace1_, "lambda1");
        check(lambda2_, trace2_, "lambda2");
    }

    const std::vector<double>& lambda(NoiseIndex which) const noexcept {
        return which == NoiseIndex::Slow ? lambda1_ : lambda2_;
    }
    const std::vector<double>& lambda1() const noexcept { return lambda1_; }
    const std::vector<double>& lambda2() const noexcept { return lambda2_; }
    double trace1() const noexcept { return trace1_; }
    double trace2() const noexcept { return trace2_; }

    std::size_t n_modes() const noexcept { return lambda1_.size(); }

private:
    static void check(const std::vector<double>& l, double trace, const char* name) {
        double sum = 0.0;
        for (double v : l) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("eigenvalues must be finite and >= 0", name);
            sum += v;
        }
        if (!std::isfinite(trace)) throw ConfigError("trace must be finite", name);
        if (sum > trace * (1.0 + 1e-12) + 1e-300) throw ConfigError("truncated trace exceeds declared trace", name);
    }

    std::vector<double> lambda1_, lambda2_;
    double trace1_ = 0.0, trace2_ = 0.0;
};

/// Named covariance-spectrum family.
struct DecayProfile {
    enum class Family { Polynomial, Exponential, FlatTruncated };
    Family family = Family::Polynomial;
    double c = 1.0;
    double p = 2.0;      // polynomial exponent
    double rho = 0.5;    // exponential ratio
    std::size_t m = 1;   // flat cut-off

    static DecayProfile polynomial(double c, double p) { return {Family::Polynomial, c, p, 0.5, 1}; }
    static DecayProfile exponential(double c, double rho) { return {Family::Exponential, c, 2.0, rho, 1}; }
    static DecayProfile flat(double c, std::size_t m) { return {Family::FlatTruncated, c, 2.0, 0.5, m}; }
};

struct Spectrum {
    std::vector<double> lambda;
    double trace = 0.0;
};

inline Spectrum make_spectrum(const DecayProfile& prof, std::size_t n_modes) {
    if (!(prof.c >= 0.0)) throw ConfigError("scale c must be >= 0", "noise.c");
    Spectrum s;
    s.lambda.resize(n_modes);
    switch (prof.family) {
    case DecayProfile::Family::Polynomial:
        if (!(prof.p > 1.0)) throw ConfigError("trace divergent: polynomial decay needs p > 1", "noise.p");
        for (std::size_t k = 1; k <= n_modes; ++k) s.lambda[k - 1] = prof.c * std::pow(static_cast<double>(k), -prof.p);
        s.trace = prof.c * std::riemann_zeta(prof.p);
        break;
    case DecayProfile::Family::Exponential:
        if (!(prof.rho >= 0.0 && prof.rho < 1.0)) throw ConfigError("trace divergent: exponential decay needs 0 <= rho < 1", "noise.rho");
        for (std::size_t k = 1; k <= n_modes; ++k) s.lambda[k - 1] = prof.c * std::pow(prof.rho, static_cast<double>(k));
        s.trace = prof.c * prof.rho / (1.0 - prof.rho);
        break;
    case DecayProfile::Family::FlatTruncated:
        for (std::size_t k = 1; k <= n_modes; ++k) s.lambda[k - 1] = k <= prof.m ? prof.c : 0.0;
        s.trace = prof.c * static_cast<double>(prof.m);
        break;
    }
    return s;
}

inline NoiseSpec make_noise_spec(const DecayProfile& q1, const DecayProfile& q2, std::size_t n_modes) {
    auto s1 = make_spectrum(q1, n_modes);
    auto s2 = make_spectrum(q2, n_modes);
    return NoiseSpec(std::move(s1.lambda), std::move(s2.lambda), s1.trace, s2.trace);
}

/// Same family for Q1 and Q2.
inline NoiseSpec make_noise_spec(const DecayProfile& q, std::size_t n_modes) { return make_noise_spec(q, q, n_modes); }

/// One Q_i-Wiener increment over dt: mode k ~ N(0, lambda_{i,k} dt).
inline SpectralField sample_increment(const NoiseSpec& spec, NoiseIndex which, double dt, NoiseStream& stream,
                                      std::size_t n_modes, double length) {
    if (!(dt > 0.0)) throw DomainError("sample_increment: dt must be positive");
    const auto& lam = spec.lambda(which);
    if (lam.size() != n_modes) throw ConfigError("noise spectrum length does not match mode count", "noise");
    std::vector<double> out(n_modes);
    const double sq = std::sqrt(dt);
    for (std::size_t k = 0; k < n_modes; ++k) out[k] = std::sqrt(lam[k]) * sq * stream.normal();
    return SpectralField(std::move(out), length);
}

/**
 * @brief Wiener increment over dt built from `refinement` equal sub-increments.
 *
 * Draw order is sub-step major, so a run at dt/2 with refinement 1 consumes the
 * same draws as a run at dt with refinement 2 and sees the same Brownian path.
 */
inline std::vector<double> sample_wiener(const std::vector<double>& lambda, double dt, unsigned refinement,
                                         NoiseStream& stream) {
    const double h = dt / refinement;
    const double sq = std::sqrt(h);
    std::vector<double> w(lambda.size(), 0.0);
    for (unsigned r = 0; r < refinement; ++r)
        for (std::size_t k = 0; k < lambda.size(); ++k) w[k] += std::sqrt(lambda[k]) * sq * stream.normal();
    return w;
}

/// Brownian increment together with the exponentially weighted convolution.
struct OuIncrement {
    std::vector<double> dW;   // sqrt(lambda_k) (beta_k(dt) - beta_k(0))
    std::vector<double> conv; // sqrt(lambda_k) int_0^dt exp(-theta_k (dt - s)) d beta_k(s)
};

/**
 * @brief Exact joint sample of the increment and the Ornstein-Uhlenbeck
 * convolution per mode, rate theta_k.
 *
 * Var(conv) = (1 - e^{-2 theta h}) / (2 theta), Cov(conv, dbeta) = (1 - e^{-theta h}) / theta.
 * Sub-steps aggregate exactly: conv <- e^{-theta h} conv + conv_sub.
 */
inline OuIncrement sample_ou_pair(const std::vector<double>& lambda, const std::vector<double>& theta, double dt,
                                  unsigned refinement, NoiseStream& stream) {
    const std::size_t n = lambda.size();
    const double h = dt / refinement;
    const double sq = std::sqrt(h);
    std::vector<double> decay(n), a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double th = theta[k];
        const double var = th > 0.0 ? -std::expm1(-2.0 * th * h) / (2.0 * th) : h;
        const double cov = th > 0.0 ? -std::expm1(-th * h) / th : h;
        decay[k] = std::exp(-th * h);
        a[k] = cov / h;
        b[k] = std::sqrt(std::max(0.0, var - cov * cov / h));
    }
    OuIncrement out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (unsigned r = 0; r < refinement; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
            const double z1 = stream.normal();
            const double z2 = stream.normal();
            const double s = std::sqrt(lambda[k]);
            const double beta = sq * z1;
            out.dW[k] += s * beta;
            out.conv[k] = decay[k] * out.conv[k] + s * (a[k] * beta + b[k] * z2);
        }
    }
    return out;
}

/// Exact wave stochastic convolution over one step: position and velocity kicks.
struct WaveKick {
    std::vector<double> position; // sqrt(lambda_k) int sin(w (dt-s)) / w d beta_k
    std::vector<double> velocity; // sqrt(lambda_k) int cos(w (dt-s)) d beta_k
};

inline WaveKick sample_wave_kick(const std::vector<double>& lambda, const std::vector<double>& omega, double dt,
                                 unsigned refinement, NoiseStream& stream) {
    const std::size_t n = lambda.size();
    const double h = dt / refinement;
    WaveKick out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (unsigned r = 0; r < refinement; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
            const double w = omega[k];
            const double s2 = std::sin(2.0 * w * h) / (4.0 * w);
            const double vp = (h / 2.0 - s2) / (w * w);
            const double vv = h / 2.0 + s2;
            const double sn = std::sin(w * h);
            const double cpv = sn * sn / (2.0 * w * w);
            // Cholesky of [[vp, cpv], [cpv, vv]]
            const double l11 = std::sqrt(std::max(vp, 0.0));
            const double l21 = l11 > 0.0 ? cpv / l11 : 0.0;
            const double l22 = std::sqrt(std::max(vv - l21 * l21, 0.0));
            const double z1 = stream.normal();
            const double z2 = stream.normal();
            const double s = std::sqrt(lambda[k]);
            const double p = s * l11 * z1;
            const double v = s * (l21 * z1 + l22 * z2);
            // carry the previous sub-steps forward by the free rotation over h
            const double c = std::cos(w * h);
            const double p0 = out.position[k], v0 = out.velocity[k];
            out.position[k] = c * p0 + sn / w * v0 + p;
            out.velocity[k] = -w * sn * p0 + c * v0 + v;
        }
    }
    return out;
}

} // namespace spdeavg
