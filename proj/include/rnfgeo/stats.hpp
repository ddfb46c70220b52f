#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace rnfgeo::stats {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// Ordinary least squares y = intercept + slope·x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("fit_line: need at least two paired points");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) {
        throw std::invalid_argument("fit_line: degenerate abscissae");
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Sample mean with its leave-one-out jackknife standard error.
inline Estimate jackknife_mean(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) {
        throw std::invalid_argument("jackknife_mean: need at least two samples");
    }
    const double total = std::accumulate(samples.begin(), samples.end(), 0.0);
    const double mean = total / static_cast<double>(n);
    double acc = 0.0;
    for (double s : samples) {
        const double loo = (total - s) / static_cast<double>(n - 1);
        acc += (loo - mean) * (loo - mean);
    }
    return {mean, std::sqrt(acc * static_cast<double>(n - 1) / static_cast<double>(n))};
}

// Unbiased sample variance.
inline double sample_variance(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) {
        throw std::invalid_argument("sample_variance: need at least two samples");
    }
    const double mean =
        std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    double acc = 0.0;
    for (double s : samples) {
        acc += (s - mean) * (s - mean);
    }
    return acc / static_cast<double>(n - 1);
}

// Upper tail of the standard normal, Q(u) = P(Z > u).
inline double normal_survival(double u) { return 0.5 * std::erfc(u / std::sqrt(2.0)); }

}  // namespace rnfgeo::stats
