#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rnfgeo/errors.hpp"

namespace rnfgeo::quad {

// Gauss–Legendre rule on [-1, 1]; nodes ascending.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

inline GaussLegendre build_gauss_legendre(std::size_t n) {
    GaussLegendre rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        // Tricomi initial guess for the i-th largest root.
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 12; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double kk = static_cast<double>(k);
                const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p1 = x;
                p0 = 1.0;
            }
            dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) <= 5e-16) {
                break;
            }
        }
        // Recompute derivative at the converged root for the weight.
        double p0 = 1.0;
        double p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double kk = static_cast<double>(k);
            const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
            p0 = p1;
            p1 = p2;
        }
        if (n == 1) {
            p1 = x;
            p0 = 1.0;
        }
        dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[n - 1 - i] = x;
        rule.nodes[i] = -x;
        rule.weights[n - 1 - i] = w;
        rule.weights[i] = w;
    }
    if (n % 2 == 1) {
        rule.nodes[n / 2] = 0.0;
    }
    return rule;
}

}  // namespace detail

// Cached n-point Gauss–Legendre rule. Thread-safe; returned reference stays
// valid for the lifetime of the program.
inline const GaussLegendre& gauss_legendre(std::size_t n) {
    if (n == 0) {
        throw std::domain_error("gauss_legendre: node count must be positive");
    }
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussLegendre>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<GaussLegendre>(detail::build_gauss_legendre(n));
    }
    return *slot;
}

// Gauss–Hermite rule for the standard normal density: Σ w_k f(z_k) ≈ E f(Z).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

// Newton iteration on the orthonormal Hermite recurrence (weight e^{-x²}),
// then rescaled to the standard normal.
inline GaussHermite build_gauss_hermite(std::size_t n) {
    const double pim4 = 0.7511255444649425;  // π^{-1/4}
    const double nn = static_cast<double>(n);
    std::vector<double> x(n);
    std::vector<double> w(n);
    const std::size_t half = (n + 1) / 2;
    double z = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * nn + 1.0) - 1.85575 * std::pow(2.0 * nn + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(nn, 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * x[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * x[1];
        } else {
            z = 2.0 * z - x[i - 2];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 20; ++iter) {
            double p1 = pim4;
            double p2 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double jj = static_cast<double>(j);
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / jj) * p2 - std::sqrt((jj - 1.0) / jj) * p3;
            }
            pp = std::sqrt(2.0 * nn) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) <= 1e-15 * std::max(1.0, std::abs(z))) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    GaussHermite rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    for (std::size_t k = 0; k < n; ++k) {
        rule.nodes[k] = std::numbers::sqrt2 * x[n - 1 - k];
        rule.weights[k] = w[n - 1 - k] * inv_sqrt_pi;
    }
    return rule;
}

}  // namespace detail

// Cached n-point Gauss–Hermite rule for the standard normal; nodes ascending.
inline const GaussHermite& gauss_hermite(std::size_t n) {
    if (n == 0) {
        throw std::domain_error("gauss_hermite: node count must be positive");
    }
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussHermite>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<GaussHermite>(detail::build_gauss_hermite(n));
    }
    return *slot;
}

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934381868;

inline double normal_pdf(double z) noexcept { return inv_sqrt_2pi * std::exp(-0.5 * z * z); }

// Panel layout for integrals against the standard normal density: the interval
// [-cutoff, cutoff] cut at `breaks` (points where the integrand is not smooth)
// and then subdivided so that no panel is wider than `max_width`.
inline std::vector<double> panel_edges(std::span<const double> breaks, double cutoff,
                                       double max_width) {
    std::vector<double> cuts{-cutoff, cutoff};
    for (double b : breaks) {
        if (std::isfinite(b) && b > -cutoff && b < cutoff) {
            cuts.push_back(b);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<double> edges;
    edges.push_back(cuts.front());
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double a = cuts[i - 1];
        const double b = cuts[i];
        const auto pieces = static_cast<std::size_t>(std::ceil((b - a) / max_width));
        for (std::size_t k = 1; k <= pieces; ++k) {
            edges.push_back(k == pieces ? b
                                        : a + (b - a) * static_cast<double>(k) /
                                                  static_cast<double>(pieces));
        }
    }
    return edges;
}

// ∫ f(z) φ(z) dz over the panels in `edges`, `order` Gauss–Legendre nodes per panel.
template <class F>
double gaussian_integral(F&& f, std::span<const double> edges, std::size_t order) {
    const GaussLegendre& rule = gauss_legendre(order);
    double total = 0.0;
    for (std::size_t p = 1; p < edges.size(); ++p) {
        const double a = edges[p - 1];
        const double b = edges[p];
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        double panel = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k) {
            const double z = mid + half * rule.nodes[k];
            panel += rule.weights[k] * f(z) * normal_pdf(z);
        }
        total += half * panel;
    }
    return total;
}

// Gauss–Legendre integral of f over [a, b].
template <class F>
double integrate(F&& f, double a, double b, std::size_t order) {
    const GaussLegendre& rule = gauss_legendre(order);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k) {
        sum += rule.weights[k] * f(mid + half * rule.nodes[k]);
    }
    return half * sum;
}

// Adaptive Gauss–Kronrod on [a, b], run with the 15- and 31-point pairs. The
// two results must agree to `abs_tol` (or 1e-12 of ∫|f|), else numeric_error.
template <class F>
double adaptive_integrate(F&& f, double a, double b, double abs_tol, unsigned max_depth = 15) {
    using boost::math::quadrature::gauss_kronrod;
    double l1 = 0.0;
    const double coarse = gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, 1e-12);
    const double fine = gauss_kronrod<double, 31>::integrate(f, a, b, max_depth, 1e-12, nullptr, &l1);
    const double gap = std::abs(fine - coarse);
    if (!(gap <= abs_tol) && !(gap <= 1e-12 * l1)) {
        throw numeric_error("adaptive_integrate: tolerance not reached");
    }
    return fine;
}

}  // namespace rnfgeo::quad
