#pragma once

#include "errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace spdeavg::stats {

/// Pairwise summation in fixed index order; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw DomainError("mean: empty sample");
    return pairwise_sum(v) / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = (v[i] - m) * (v[i] - m);
    return pairwise_sum(d) / static_cast<double>(v.size() - 1);
}

/// Standard error of the mean.
inline double stderr_of_mean(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double ci_low = 0.0;  // 95% CI of the slope
    double ci_high = 0.0;
    std::size_t n = 0;
};

/// Ordinary least squares y = a + b x with a 95% t-interval (n - 2 dof) for b.
inline LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("fit_linear: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("fit_linear: need at least two points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("fit_linear: abscissae are all equal");
    LinearFit f;
    f.n = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            sse += r * r;
        }
        f.slope_stderr = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
        const boost::math::students_t dist(static_cast<double>(n - 2));
        const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
        f.ci_low = f.slope - q * f.slope_stderr;
        f.ci_high = f.slope + q * f.slope_stderr;
    } else {
        f.ci_low = f.ci_high = f.slope;
    }
    return f;
}

/**
 * @brief Slope of log y against log x by OLS, 95% CI from the t-distribution.
 *
 * Optional weights scale the squared residuals (weighted least squares).
 */
inline LinearFit fit_loglog_slope(std::span<const double> x, std::span<const double> y,
                                  std::span<const double> weights = {}) {
    if (x.size() != y.size()) throw DomainError("fit_loglog_slope: size mismatch");
    if (x.size() < 3) throw DomainError("fit_loglog_slope: need at least three points");
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_loglog_slope: coordinates must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    if (weights.empty()) return fit_linear(lx, ly);
    if (weights.size() != x.size()) throw DomainError("fit_loglog_slope: weight count mismatch");
    // weighted OLS via sqrt-weight transform of the centred problem
    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        if (!(weights[i] > 0.0)) throw DomainError("fit_loglog_slope: weights must be positive");
        sw += weights[i];
        swx += weights[i] * lx[i];
        swy += weights[i] * ly[i];
    }
    const double mx = swx / sw, my = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += weights[i] * (lx[i] - mx) * (lx[i] - mx);
        sxy += weights[i] * (lx[i] - mx) * (ly[i] - my);
    }
    LinearFit f;
    f.n = lx.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - f.intercept - f.slope * lx[i];
        sse += weights[i] * r * r;
    }
    f.slope_stderr = std::sqrt(sse / static_cast<double>(f.n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(f.n - 2));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - q * f.slope_stderr;
    f.ci_high = f.slope + q * f.slope_stderr;
    return f;
}

/// Mean and standard error from `batches` equal consecutive batch means.
inline std::pair<double, double> batch_means(std::span<const double> series, std::size_t batches) {
    if (batches < 2 || series.size() < batches) throw DomainError("batch_means: not enough data for the batch count");
    const std::size_t len = series.size() / batches;
    std::vector<double> bm(batches);
    for (std::size_t b = 0; b < batches; ++b) bm[b] = mean(series.subspan(b * len, len));
    return {mean(series.first(len * batches)), stderr_of_mean(bm)};
}

} // namespace spdeavg::stats
