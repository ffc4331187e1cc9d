/// @file stats.hpp
/// @brief Monte Carlo summaries: means with normal CIs, log-domain means of
///        exponentials, least-squares lines and a percentile bootstrap.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace vortex {

inline constexpr double kZ95 = 1.959963984540054;

struct MeanCI {
    double mean = 0.0;
    double se = 0.0;
    double ci = 0.0;  ///< 95% half-width
    std::size_t n = 0;
};

/// Welford accumulator; merge() combines partial results in a fixed order.
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    void merge(const RunningStats& o) {
        if (o.n_ == 0) return;
        const double n = static_cast<double>(n_ + o.n_);
        const double d = o.mean_ - mean_;
        m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
        mean_ += d * static_cast<double>(o.n_) / n;
        n_ += o.n_;
    }
    [[nodiscard]] std::size_t count() const { return n_; }
    [[nodiscard]] double mean() const { return mean_; }
    [[nodiscard]] double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    [[nodiscard]] MeanCI summary() const {
        MeanCI r;
        r.n = n_;
        r.mean = mean_;
        r.se = n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
        r.ci = kZ95 * r.se;
        return r;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline MeanCI mean_ci(const std::vector<double>& x) {
    RunningStats s;
    for (double v : x) s.add(v);
    return s.summary();
}

/// Half-width for the difference of two independent estimates.
inline double joint_ci(const MeanCI& a, const MeanCI& b) { return std::hypot(a.ci, b.ci); }

/// Estimate of E[exp(X)] from samples of X, kept in log space.
struct ExpMean {
    double log_mean = 0.0;
    double rel_ci = 0.0;   ///< 95% half-width of the estimate divided by the estimate
    double ess = 0.0;      ///< (sum w)^2 / sum w^2 with w = exp(x)
    std::size_t n = 0;
    [[nodiscard]] double value() const { return std::exp(log_mean); }
    [[nodiscard]] double ci() const { return rel_ci * value(); }
};

inline ExpMean exp_mean(const std::vector<double>& x) {
    ExpMean r;
    r.n = x.size();
    if (x.empty()) return r;
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) {
        r.log_mean = m;
        r.rel_ci = std::numeric_limits<double>::infinity();
        return r;
    }
    double s1 = 0.0, s2 = 0.0;
    for (double v : x) {
        const double e = std::exp(v - m);
        s1 += e;
        s2 += e * e;
    }
    const double n = static_cast<double>(x.size());
    r.log_mean = m + std::log(s1 / n);
    r.ess = s1 * s1 / s2;
    if (x.size() > 1) {
        const double mean = s1 / n;
        const double var = std::max(0.0, (s2 / n - mean * mean) * n / (n - 1.0));
        r.rel_ci = kZ95 * std::sqrt(var / n) / mean;
    }
    return r;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_se = 0.0;
    std::size_t n = 0;
    [[nodiscard]] double slope_ci() const { return kZ95 * slope_se; }
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need two or more paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: x values are all equal");
    LinearFit f;
    f.n = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - f.intercept - f.slope * x[i];
        sse += e * e;
    }
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
    return f;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap over resampled indices 0..n-1.
inline Interval bootstrap_interval(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& stat,
                                   std::size_t reps, std::uint64_t seed, double level = 0.95) {
    if (n == 0 || reps < 10) throw std::invalid_argument("bootstrap_interval: need data and >= 10 resamples");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    std::vector<double> vals;
    vals.reserve(reps);
    for (std::size_t b = 0; b < reps; ++b) {
        for (auto& i : idx) i = pick(rng);
        vals.push_back(stat(idx));
    }
    std::sort(vals.begin(), vals.end());
    const double a = 0.5 * (1.0 - level);
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(reps - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const std::size_t j = std::min(i + 1, reps - 1);
        return vals[i] + (pos - static_cast<double>(i)) * (vals[j] - vals[i]);
    };
    return {at(a), at(1.0 - a)};
}

/// Batch-means CI for the time average of a correlated series.
inline MeanCI batch_means(const std::vector<double>& series, std::size_t batches = 20) {
    if (series.size() < batches * 2) throw std::invalid_argument("batch_means: series too short");
    const std::size_t len = series.size() / batches;
    RunningStats s;
    for (std::size_t b = 0; b < batches; ++b) {
        double m = 0.0;
        for (std::size_t i = 0; i < len; ++i) m += series[b * len + i];
        s.add(m / static_cast<double>(len));
    }
    return s.summary();
}

}  // namespace vortex
