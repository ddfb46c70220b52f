#pragma once

// Infinite-width kernels of random fully connected networks on the sphere.
//
// A single layer maps the input correlation u = ⟨x, y⟩ to
//
//     κ(u) = Γ_b + Γ_W · E[σ(Z1) σ(u Z1 + √(1−u²) Z2)],   Γ_W = (1 − Γ_b) / E[σ(Z)²],
//
// so κ(1) = 1 for every activation and bias level. Depth L acts by composition.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rnfgeo/errors.hpp"
#include "rnfgeo/quadrature.hpp"
#include "rnfgeo/stats.hpp"

namespace rnfgeo {

namespace act {
struct Heaviside {};
struct ReLU {};
struct LeakyReLU {
    double slope = 0.01;
};
// σ_a(x) = exp(−a x² / 2)
struct GaussianRBF {
    double a = 1.0;
};
struct Tanh {};
struct Logistic {};
// Piecewise-linear interpolant through (x, y) points, constant beyond the ends.
struct Tabulated {
    std::vector<std::pair<double, double>> points;
};
}  // namespace act

using ActivationKind = std::variant<act::Heaviside, act::ReLU, act::LeakyReLU, act::GaussianRBF,
                                    act::Tanh, act::Logistic, act::Tabulated>;

// Regularity of σ, which fixes the covariance regularity of its kernel:
// a jump gives CRI 1/2, a kink gives 3/2, C² gives 2.
enum class Regularity { jump, kink, smooth };

namespace detail {

// θ − sin θ without cancellation for small θ.
inline double theta_minus_sin(double theta) noexcept {
    if (std::abs(theta) < 1e-2) {
        const double t2 = theta * theta;
        return theta * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)));
    }
    return theta - std::sin(theta);
}

}  // namespace detail

class Activation {
public:
    explicit Activation(ActivationKind kind) : state_(std::make_shared<State>(std::move(kind))) {}

    static Activation heaviside() { return Activation(act::Heaviside{}); }
    static Activation relu() { return Activation(act::ReLU{}); }
    static Activation leaky_relu(double slope) { return Activation(act::LeakyReLU{slope}); }
    static Activation gaussian(double a) { return Activation(act::GaussianRBF{a}); }
    static Activation tanh() { return Activation(act::Tanh{}); }
    static Activation logistic() { return Activation(act::Logistic{}); }
    static Activation tabulated(std::vector<std::pair<double, double>> points) {
        return Activation(act::Tabulated{std::move(points)});
    }

    const ActivationKind& kind() const noexcept { return state_->kind; }

    std::string name() const {
        // Shortest representation that round-trips.
        auto shortest = [](double x) {
            char buf[32];
            const auto r = std::to_chars(buf, buf + sizeof buf, x);
            return std::string(buf, r.ptr);
        };
        std::ostringstream os;
        std::visit(
            [&](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, act::Heaviside>) os << "heaviside";
                else if constexpr (std::is_same_v<K, act::ReLU>) os << "relu";
                else if constexpr (std::is_same_v<K, act::LeakyReLU>) os << "leaky_relu(" << shortest(k.slope) << ")";
                else if constexpr (std::is_same_v<K, act::GaussianRBF>) os << "gaussian(" << shortest(k.a) << ")";
                else if constexpr (std::is_same_v<K, act::Tanh>) os << "tanh";
                else if constexpr (std::is_same_v<K, act::Logistic>) os << "logistic";
                else os << "tabulated(" << k.points.size() << ")";
            },
            state_->kind);
        return os.str();
    }

    double operator()(double x) const noexcept { return state_->value(x); }

    // Derivative where it exists; 0 at the jump of the step function.
    double derivative(double x) const noexcept { return state_->slope(x); }

    // Points where σ is not smooth.
    std::span<const double> breakpoints() const noexcept { return state_->breaks; }

    // E[σ(Z)²], Z standard normal.
    double second_moment() const noexcept { return state_->second_moment; }

    Regularity regularity() const noexcept { return state_->regularity; }

    // CRI implied by the regularity class of σ.
    double nominal_cri() const noexcept {
        switch (state_->regularity) {
            case Regularity::jump: return 0.5;
            case Regularity::kink: return 1.5;
            case Regularity::smooth: return 2.0;
        }
        return 2.0;
    }

    // Kernels whose derivative at u = 1 is finite (σ absolutely continuous).
    bool finite_slope_at_one() const noexcept { return state_->regularity != Regularity::jump; }

    // Closed-form E[σσ] is available.
    bool has_closed_form() const noexcept {
        return std::holds_alternative<act::Heaviside>(state_->kind) ||
               std::holds_alternative<act::ReLU>(state_->kind) ||
               std::holds_alternative<act::LeakyReLU>(state_->kind) ||
               std::holds_alternative<act::GaussianRBF>(state_->kind);
    }

    // σ even: the kernel is then even in u (and not monotone on [−1, 0]).
    bool is_even() const noexcept { return std::holds_alternative<act::GaussianRBF>(state_->kind); }

    // Closed-form E[σ(X)σ(Y)] for unit-variance (X, Y) with correlation u.
    std::optional<double> closed_form_moment(double u) const noexcept {
        constexpr double pi = std::numbers::pi;
        const double s = std::sqrt(std::max(0.0, (1.0 - u) * (1.0 + u)));
        return std::visit(
            [&](const auto& k) -> std::optional<double> {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, act::Heaviside>) {
                    return (pi - std::acos(u)) / (2.0 * pi);
                } else if constexpr (std::is_same_v<K, act::ReLU>) {
                    return (s + u * (pi - std::acos(u))) / (2.0 * pi);
                } else if constexpr (std::is_same_v<K, act::LeakyReLU>) {
                    // σ(x) = p x + q |x| with p = (1+slope)/2, q = (1−slope)/2.
                    const double p = 0.5 * (1.0 + k.slope);
                    const double q = 0.5 * (1.0 - k.slope);
                    return p * p * u + q * q * (2.0 / pi) * (s + u * std::asin(u));
                } else if constexpr (std::is_same_v<K, act::GaussianRBF>) {
                    const double a = k.a;
                    return 1.0 / std::sqrt((1.0 + a) * (1.0 + a) - a * a * u * u);
                } else {
                    return std::nullopt;
                }
            },
            state_->kind);
    }

    // Closed-form E[σ(Z)²] − E[σ(X)σ(Y)] at correlation 1 − τ, written to keep
    // full relative accuracy as τ → 0.
    std::optional<double> closed_form_moment_deficit(double tau) const noexcept {
        constexpr double pi = std::numbers::pi;
        const double theta = 2.0 * std::asin(std::sqrt(0.5 * tau));  // arccos(1 − τ)
        return std::visit(
            [&](const auto& k) -> std::optional<double> {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, act::Heaviside>) {
                    return theta / (2.0 * pi);
                } else if constexpr (std::is_same_v<K, act::ReLU>) {
                    return 0.5 * tau + (detail::theta_minus_sin(theta) - tau * theta) / (2.0 * pi);
                } else if constexpr (std::is_same_v<K, act::LeakyReLU>) {
                    const double p = 0.5 * (1.0 + k.slope);
                    const double q = 0.5 * (1.0 - k.slope);
                    return p * p * tau +
                           q * q * (tau + (2.0 / pi) * (detail::theta_minus_sin(theta) - tau * theta));
                } else if constexpr (std::is_same_v<K, act::GaussianRBF>) {
                    const double a = k.a;
                    const double x = a * a * tau * (2.0 - tau) / (1.0 + 2.0 * a);
                    const double r = std::sqrt(1.0 + x);
                    return x / (r * (1.0 + r)) / std::sqrt(1.0 + 2.0 * a);
                } else {
                    return std::nullopt;
                }
            },
            state_->kind);
    }

    // Closed-form d/du E[σσ] at u = 1 where one exists.
    std::optional<double> closed_form_slope_at_one() const noexcept {
        return std::visit(
            [&](const auto& k) -> std::optional<double> {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, act::ReLU>) {
                    return 0.5;
                } else if constexpr (std::is_same_v<K, act::LeakyReLU>) {
                    return 0.5 * (1.0 + k.slope * k.slope);
                } else if constexpr (std::is_same_v<K, act::GaussianRBF>) {
                    return k.a * k.a / std::pow(1.0 + 2.0 * k.a, 1.5);
                } else {
                    return std::nullopt;
                }
            },
            state_->kind);
    }

private:
    struct State {
        ActivationKind kind;
        std::vector<double> breaks;
        std::vector<double> xs;
        std::vector<double> ys;
        double second_moment = 0.0;
        Regularity regularity = Regularity::smooth;

        explicit State(ActivationKind k) : kind(std::move(k)) {
            std::visit(
                [&](const auto& v) {
                    using K = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<K, act::Heaviside>) {
                        breaks = {0.0};
                        regularity = Regularity::jump;
                        second_moment = 0.5;
                    } else if constexpr (std::is_same_v<K, act::ReLU>) {
                        breaks = {0.0};
                        regularity = Regularity::kink;
                        second_moment = 0.5;
                    } else if constexpr (std::is_same_v<K, act::LeakyReLU>) {
                        if (!std::isfinite(v.slope) || v.slope == 1.0) {
                            throw std::domain_error("LeakyReLU: slope must be finite and != 1");
                        }
                        breaks = {0.0};
                        regularity = Regularity::kink;
                        second_moment = 0.5 * (1.0 + v.slope * v.slope);
                    } else if constexpr (std::is_same_v<K, act::GaussianRBF>) {
                        if (!(v.a > 0.0) || !std::isfinite(v.a)) {
                            throw std::domain_error("GaussianRBF: a must be positive");
                        }
                        second_moment = 1.0 / std::sqrt(1.0 + 2.0 * v.a);
                    } else if constexpr (std::is_same_v<K, act::Tabulated>) {
                        if (v.points.size() < 2) {
                            throw std::domain_error("Tabulated: need at least two points");
                        }
                        for (std::size_t i = 0; i < v.points.size(); ++i) {
                            const auto [x, y] = v.points[i];
                            if (!std::isfinite(x) || !std::isfinite(y)) {
                                throw std::domain_error("Tabulated: non-finite point");
                            }
                            if (i > 0 && !(x > v.points[i - 1].first)) {
                                throw std::domain_error("Tabulated: x must be strictly increasing");
                            }
                            xs.push_back(x);
                            ys.push_back(y);
                        }
                        breaks = xs;
                        regularity = Regularity::kink;
                    }
                },
                kind);
            if (second_moment == 0.0) {
                second_moment = moment_by_quadrature();
            }
            if (!(second_moment > 0.0)) {
                throw std::domain_error("activation has zero second moment");
            }
        }

        double value(double x) const noexcept {
            return std::visit(
                [&](const auto& k) -> double {
                    using K = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<K, act::Heaviside>) return x >= 0.0 ? 1.0 : 0.0;
                    else if constexpr (std::is_same_v<K, act::ReLU>) return x > 0.0 ? x : 0.0;
                    else if constexpr (std::is_same_v<K, act::LeakyReLU>) return x > 0.0 ? x : k.slope * x;
                    else if constexpr (std::is_same_v<K, act::GaussianRBF>) return std::exp(-0.5 * k.a * x * x);
                    else if constexpr (std::is_same_v<K, act::Tanh>) return std::tanh(x);
                    else if constexpr (std::is_same_v<K, act::Logistic>) return 1.0 / (1.0 + std::exp(-x));
                    else return interpolate(x);
                },
                kind);
        }

        double slope(double x) const noexcept {
            return std::visit(
                [&](const auto& k) -> double {
                    using K = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<K, act::Heaviside>) return 0.0;
                    else if constexpr (std::is_same_v<K, act::ReLU>) return x > 0.0 ? 1.0 : 0.0;
                    else if constexpr (std::is_same_v<K, act::LeakyReLU>) return x > 0.0 ? 1.0 : k.slope;
                    else if constexpr (std::is_same_v<K, act::GaussianRBF>) return -k.a * x * std::exp(-0.5 * k.a * x * x);
                    else if constexpr (std::is_same_v<K, act::Tanh>) {
                        const double c = 1.0 / std::cosh(x);
                        return c * c;
                    } else if constexpr (std::is_same_v<K, act::Logistic>) {
                        const double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 - s);
                    } else {
                        return interpolate_slope(x);
                    }
                },
                kind);
        }

        double interpolate(double x) const noexcept {
            if (x <= xs.front()) return ys.front();
            if (x >= xs.back()) return ys.back();
            const auto it = std::upper_bound(xs.begin(), xs.end(), x);
            const auto i = static_cast<std::size_t>(it - xs.begin());
            const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + w * (ys[i] - ys[i - 1]);
        }

        double interpolate_slope(double x) const noexcept {
            if (x <= xs.front() || x >= xs.back()) return 0.0;
            const auto it = std::upper_bound(xs.begin(), xs.end(), x);
            const auto i = static_cast<std::size_t>(it - xs.begin());
            return (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        }

        double moment_by_quadrature() const {
            auto sq = [&](double z) {
                const double v = value(z);
                return v * v;
            };
            const auto edges = quad::panel_edges(breaks, 12.0, 1.0);
            const double coarse = quad::gaussian_integral(sq, edges, 24);
            const double fine = quad::gaussian_integral(sq, edges, 48);
            if (std::abs(fine - coarse) > 1e-12 * std::max(std::abs(fine), 1e-300)) {
                throw numeric_error("second moment quadrature did not converge");
            }
            return fine;
        }
    };

    std::shared_ptr<const State> state_;
};

// Weight/bias variances that keep κ(1) = 1.
struct Calibration {
    double gamma_b = 0.0;
    double gamma_w = 1.0;

    static Calibration for_activation(const Activation& activation, double gamma_b) {
        if (!(gamma_b >= 0.0 && gamma_b < 1.0)) {
            throw std::domain_error("Calibration: gamma_b must lie in [0, 1)");
        }
        return {gamma_b, (1.0 - gamma_b) / activation.second_moment()};
    }
};

enum class KernelRoute {
    automatic,   // closed form when available, quadrature otherwise
    quadrature,  // always the generic quadrature
};

namespace detail {

inline constexpr double kGaussCutoff = 10.0;
// Panel width and the two Gauss–Legendre orders of the bivariate quadrature,
// tried in order until the two orders agree.
struct PanelRule {
    double width;
    std::size_t coarse;
    std::size_t fine;
};

inline constexpr PanelRule kPanelRules[] = {{2.0, 12, 20}, {1.0, 12, 24}};

// Gauss–Hermite orders of the product rule tried first for activations
// without kinks.
inline constexpr std::size_t kHermiteCoarse = 128;
inline constexpr std::size_t kHermiteFine = 192;

// E[g(σ(X), σ(u X + s W))] by an n×n Gauss–Hermite product rule.
template <class G>
double hermite_pair(const Activation& sigma, G&& g, double u, double s, std::size_t n) {
    const quad::GaussHermite& rule = quad::gauss_hermite(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rule.nodes[i];
        const double sx = sigma(x);
        double inner = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            inner += rule.weights[j] * g(sx, sigma(u * x + s * rule.nodes[j]));
        }
        total += rule.weights[i] * inner;
    }
    return total;
}

// Outer-integral break points for E[σ(X) σ(uX + sW)]: the kinks of σ plus a
// geometric refinement around x = b/u, where the inner integral varies on the
// scale s/|u|.
inline std::vector<double> outer_breaks(std::span<const double> breaks, double u, double s) {
    std::vector<double> out(breaks.begin(), breaks.end());
    if (u != 0.0) {
        const double width = s / std::abs(u);
        for (double b : breaks) {
            const double centre = b / u;
            if (std::abs(centre) > kGaussCutoff + 1.0) continue;
            for (double w = width; w < 1.0; w *= 2.0) {
                out.push_back(centre - w);
                out.push_back(centre + w);
            }
            out.push_back(centre);
        }
    }
    return out;
}

inline double moment_quadrature_order(const Activation& sigma, double u, std::size_t order,
                                      double width) {
    const auto breaks = sigma.breakpoints();
    if (u == 1.0 || u == -1.0) {
        const auto edges = quad::panel_edges(breaks, kGaussCutoff, width);
        return quad::gaussian_integral([&](double z) { return sigma(z) * sigma(u * z); }, edges,
                                       order);
    }
    const double s = std::sqrt((1.0 - u) * (1.0 + u));
    const auto outer = quad::panel_edges(outer_breaks(breaks, u, s), kGaussCutoff, width);
    std::vector<double> inner_breaks(breaks.size());
    auto inner = [&](double x) {
        for (std::size_t i = 0; i < breaks.size(); ++i) {
            inner_breaks[i] = (breaks[i] - u * x) / s;
        }
        const auto edges = quad::panel_edges(inner_breaks, kGaussCutoff, width);
        return quad::gaussian_integral([&](double w) { return sigma(u * x + s * w); }, edges,
                                       order);
    };
    return quad::gaussian_integral([&](double x) { return sigma(x) * inner(x); }, outer, order);
}

// ½ E[(σ(X) − σ(Y))²] at correlation u = 1 − τ.
inline double moment_deficit_quadrature_order(const Activation& sigma, double tau,
                                              std::size_t order, double width) {
    const auto breaks = sigma.breakpoints();
    const double u = 1.0 - tau;
    const double s = std::sqrt(tau * (2.0 - tau));
    if (s == 0.0) {
        return 0.0;
    }
    const auto outer = quad::panel_edges(outer_breaks(breaks, u, s), kGaussCutoff, width);
    std::vector<double> inner_breaks(breaks.size());
    auto inner = [&](double x) {
        for (std::size_t i = 0; i < breaks.size(); ++i) {
            inner_breaks[i] = (breaks[i] - u * x) / s;
        }
        const double sx = sigma(x);
        const auto edges = quad::panel_edges(inner_breaks, kGaussCutoff, width);
        return quad::gaussian_integral(
            [&](double w) {
                const double diff = sx - sigma(u * x + s * w);
                return diff * diff;
            },
            edges, order);
    };
    return 0.5 * quad::gaussian_integral(inner, outer, order);
}

}  // namespace detail

// E[σ(Z)²] − E[σ(X)σ(Y)] at correlation 1 − τ, by the same nested quadrature
// applied to ½(σ(X) − σ(Y))², which stays accurate as τ → 0.
inline double gaussian_moment_deficit_quadrature(const Activation& sigma, double tau) {
    if (!(tau >= 0.0 && tau <= 2.0)) {
        throw std::domain_error("gaussian_moment_deficit_quadrature: tau must lie in [0, 2]");
    }
    if (sigma.breakpoints().empty()) {
        const double s = std::sqrt(tau * (2.0 - tau));
        auto g = [](double a, double b) { return 0.5 * (a - b) * (a - b); };
        const double coarse = detail::hermite_pair(sigma, g, 1.0 - tau, s, detail::kHermiteCoarse);
        const double fine = detail::hermite_pair(sigma, g, 1.0 - tau, s, detail::kHermiteFine);
        if (std::abs(fine - coarse) <= 1e-9 * std::abs(fine) + 1e-300) {
            return fine;
        }
    }
    for (const auto& rule : detail::kPanelRules) {
        const double coarse =
            detail::moment_deficit_quadrature_order(sigma, tau, rule.coarse, rule.width);
        const double fine = detail::moment_deficit_quadrature_order(sigma, tau, rule.fine, rule.width);
        if (std::abs(fine - coarse) <= 1e-9 * std::abs(fine) + 1e-300) {
            return fine;
        }
    }
    throw numeric_error("gaussian_moment_deficit_quadrature: no convergence at tau = " +
                        std::to_string(tau));
}

// E[σ(Z1) σ(u Z1 + √(1−u²) Z2)]. Activations without kinks try a 128/192-node
// Gauss–Hermite product rule first; otherwise, or if it has not converged,
// nested Gauss–Legendre panels split at the kinks of σ. Each rule is run at two
// orders; a change above 1e-9 (scaled by E[σ²]) moves on to the next rule, and
// failing all of them is a convergence failure.
inline double gaussian_moment_quadrature(const Activation& sigma, double u) {
    if (!(std::abs(u) <= 1.0)) {
        throw std::domain_error("gaussian_moment_quadrature: |u| must be <= 1");
    }
    if (sigma.breakpoints().empty()) {
        const double s = std::sqrt((1.0 - u) * (1.0 + u));
        auto g = [](double a, double b) { return a * b; };
        const double coarse = detail::hermite_pair(sigma, g, u, s, detail::kHermiteCoarse);
        const double fine = detail::hermite_pair(sigma, g, u, s, detail::kHermiteFine);
        if (std::abs(fine - coarse) <= 1e-9 * sigma.second_moment()) {
            return fine;
        }
    }
    for (const auto& rule : detail::kPanelRules) {
        const double coarse = detail::moment_quadrature_order(sigma, u, rule.coarse, rule.width);
        const double fine = detail::moment_quadrature_order(sigma, u, rule.fine, rule.width);
        if (std::abs(fine - coarse) <= 1e-9 * sigma.second_moment()) {
            return fine;
        }
    }
    throw numeric_error("gaussian_moment_quadrature: no convergence at u = " + std::to_string(u));
}

// Calibrated single-layer kernel κ(u).
inline double kappa_single(const Activation& sigma, const Calibration& cal, double u,
                           KernelRoute route = KernelRoute::automatic) {
    if (!(std::abs(u) <= 1.0)) {
        throw std::domain_error("kappa_single: |u| must be <= 1");
    }
    std::optional<double> moment;
    if (route == KernelRoute::automatic) {
        moment = sigma.closed_form_moment(u);
    }
    if (!moment) {
        moment = gaussian_moment_quadrature(sigma, u);
    }
    const double k = cal.gamma_b + cal.gamma_w * *moment;
    return std::clamp(k, -1.0, 1.0);
}

// 1 − κ(1 − τ) for the single layer, τ ∈ [0, 2].
inline double kappa_deficit(const Activation& sigma, const Calibration& cal, double tau,
                            KernelRoute route = KernelRoute::automatic) {
    if (!(tau >= 0.0 && tau <= 2.0)) {
        throw std::domain_error("kappa_deficit: tau must lie in [0, 2]");
    }
    std::optional<double> deficit;
    if (route == KernelRoute::automatic) {
        deficit = sigma.closed_form_moment_deficit(tau);
    }
    if (!deficit) {
        deficit = gaussian_moment_deficit_quadrature(sigma, tau);
    }
    return std::clamp(cal.gamma_w * *deficit, 0.0, 2.0);
}

// κ_L = κ ∘ ⋯ ∘ κ evaluated by literal repeated application.
class Kernel {
public:
    Kernel(Activation sigma, double gamma_b, int depth = 1,
           KernelRoute route = KernelRoute::automatic)
        : sigma_(std::move(sigma)),
          cal_(Calibration::for_activation(sigma_, gamma_b)),
          depth_(depth),
          route_(route) {
        if (depth_ < 1) {
            throw std::domain_error("Kernel: depth must be >= 1");
        }
    }

    double operator()(double u) const {
        for (int layer = 0; layer < depth_; ++layer) {
            u = kappa_single(sigma_, cal_, u, route_);
        }
        return u;
    }

    double single(double u) const { return kappa_single(sigma_, cal_, u, route_); }

    // 1 − κ_L(1 − τ), iterated on the deficit so that it keeps full relative
    // precision for tiny τ.
    double deficit(double tau) const {
        for (int layer = 0; layer < depth_; ++layer) {
            tau = kappa_deficit(sigma_, cal_, tau, route_);
        }
        return tau;
    }

    Kernel composed(int times) const {
        if (times < 1) {
            throw std::domain_error("Kernel::composed: L must be >= 1");
        }
        return Kernel(sigma_, cal_.gamma_b, depth_ * times, route_);
    }

    Kernel with_depth(int depth) const { return Kernel(sigma_, cal_.gamma_b, depth, route_); }

    const Activation& activation() const noexcept { return sigma_; }
    const Calibration& calibration() const noexcept { return cal_; }
    int depth() const noexcept { return depth_; }
    KernelRoute route() const noexcept { return route_; }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        os << sigma_.name() << ";gamma_b=" << cal_.gamma_b << ";L=" << depth_;
        return os.str();
    }

private:
    Activation sigma_;
    Calibration cal_;
    int depth_;
    KernelRoute route_;
};

// Slope of the single-layer kernel at u = 1: Γ_W · E[σ'(Z)²] (Price's theorem),
// closed form where known. Infinite for activations with a jump.
inline double single_layer_slope_at_one(const Activation& sigma, const Calibration& cal) {
    if (!sigma.finite_slope_at_one()) {
        return std::numeric_limits<double>::infinity();
    }
    if (auto d = sigma.closed_form_slope_at_one()) {
        return cal.gamma_w * *d;
    }
    auto sq = [&](double z) {
        const double v = sigma.derivative(z);
        return v * v;
    };
    const auto edges = quad::panel_edges(sigma.breakpoints(), 12.0, 1.0);
    const double coarse = quad::gaussian_integral(sq, edges, 24);
    const double fine = quad::gaussian_integral(sq, edges, 48);
    if (std::abs(fine - coarse) > 1e-12 * std::max(std::abs(fine), 1e-300)) {
        throw numeric_error("derivative moment quadrature did not converge");
    }
    return cal.gamma_w * fine;
}

enum class KernelClass { fractal, kac_rice };
enum class Regime { low_disorder, sparse, high_disorder };

inline constexpr double kClassTolerance = 1e-6;
inline constexpr double kRegimeTolerance = 1e-6;

inline std::string to_string(KernelClass c) {
    return c == KernelClass::fractal ? "fractal" : "kac_rice";
}

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::low_disorder: return "low_disorder";
        case Regime::sparse: return "sparse";
        case Regime::high_disorder: return "high_disorder";
    }
    return "unknown";
}

// Classes are defined for CRI in (0, 1) and (1, 2] only.
inline KernelClass classify(double beta) {
    if (!(beta > 0.0 && beta <= 2.0 + kClassTolerance)) {
        throw std::domain_error("classify: beta must lie in (0, 2]");
    }
    if (std::abs(beta - 1.0) <= kClassTolerance) {
        throw classification_error("classify: boundary CRI, unclassifiable");
    }
    return beta < 1.0 ? KernelClass::fractal : KernelClass::kac_rice;
}

struct RegimeLabel {
    Regime value;
    double kappa_prime_1;
};

inline RegimeLabel regime(double kappa_prime_1) {
    if (!(kappa_prime_1 > 0.0) || !std::isfinite(kappa_prime_1)) {
        throw std::domain_error("regime: kappa'(1) must be positive and finite");
    }
    Regime r = Regime::sparse;
    if (kappa_prime_1 < 1.0 - kRegimeTolerance) {
        r = Regime::low_disorder;
    } else if (kappa_prime_1 > 1.0 + kRegimeTolerance) {
        r = Regime::high_disorder;
    }
    return {r, kappa_prime_1};
}

struct CriEstimate {
    double beta = 0.0;
    double c1 = 0.0;  // amplitude of the t^β term
    double r_squared = 1.0;
};

// Fit κ_L(1 − t) = p(t) + c1 t^β on 50 log-spaced t. The polynomial part is 1
// for kernels with an infinite slope at 1, and 1 − κ_L'(1)·t otherwise; the
// Kac-Rice window is scaled down by κ_L'(1) when that exceeds one so the fit
// stays in the asymptotic range.
inline CriEstimate estimate_cri(const Kernel& kernel) {
    const Activation& sigma = kernel.activation();
    const bool fractal_route = !sigma.finite_slope_at_one();
    double slope_l = 0.0;
    double scale = 1.0;
    if (!fractal_route) {
        slope_l = std::pow(single_layer_slope_at_one(sigma, kernel.calibration()), kernel.depth());
        scale = std::max(1.0, slope_l);
    }
    constexpr int kPoints = 50;
    const double log_lo = std::log(1e-7 / scale);
    const double log_hi = std::log(1e-2 / scale);
    std::vector<double> lx;
    std::vector<double> ly;
    double largest = 0.0;
    for (int i = 0; i < kPoints; ++i) {
        const double t = std::exp(log_lo + (log_hi - log_lo) * i / (kPoints - 1));
        const double deficit = kernel.deficit(t);
        const double residual = fractal_route ? deficit : std::abs(deficit - slope_l * t);
        largest = std::max(largest, residual / t);
        if (residual > 0.0) {
            lx.push_back(std::log(t));
            ly.push_back(std::log(residual));
        }
    }
    if (!fractal_route && largest < 1e-13 * std::max(slope_l, 1e-300)) {
        // Nothing beyond the linear part is resolved: κ is C² at 1.
        return {2.0, 0.0, 1.0};
    }
    if (lx.size() < kPoints / 2) {
        throw numeric_error("estimate_cri: residual vanishes on most of the window");
    }
    const auto fit = stats::fit_line(lx, ly);
    if (fit.r_squared < 0.999) {
        throw numeric_error("estimate_cri: no clean power law (R^2 = " +
                            std::to_string(fit.r_squared) + ")");
    }
    if (!(fit.slope > 0.0 && fit.slope <= 2.5)) {
        throw numeric_error("estimate_cri: exponent outside (0, 2.5]");
    }
    return {std::min(fit.slope, 2.0), std::exp(fit.intercept), fit.r_squared};
}

// Depth-L kernel with the scalars that drive classification.
struct KernelProfile {
    Kernel kernel;
    double kappa_prime_1 = 0.0;  // single layer; +inf for the fractal class
    double cri_beta = 0.0;
    double c1 = 0.0;
    bool cri_fitted = true;  // false: fit failed at this depth, value propagated from depth 1
    KernelClass klass = KernelClass::kac_rice;
    std::optional<RegimeLabel> regime_label;

    double operator()(double u) const { return kernel(u); }
    int depth() const noexcept { return kernel.depth(); }
    const Activation& activation() const noexcept { return kernel.activation(); }
    const Calibration& calibration() const noexcept { return kernel.calibration(); }
};

namespace detail {

// Depth-L CRI and t^β amplitude from the single-layer expansion when a direct
// fit is out of reach: jump class β_L = β^L, c_L = c^{1+β+…+β^{L−1}};
// Kac-Rice class β_L = β, c_L = c Σ_j K^{L−1−j} K^{jβ}.
inline std::pair<double, double> propagate_cri(double beta, double c, double slope, int depth,
                                               bool fractal) {
    if (fractal) {
        double exponent = 0.0;
        double power = 1.0;
        for (int j = 0; j < depth; ++j) {
            exponent += power;
            power *= beta;
        }
        return {std::pow(beta, depth), std::pow(c, exponent)};
    }
    double sum = 0.0;
    for (int j = 0; j < depth; ++j) {
        sum += std::pow(slope, depth - 1 - j) * std::pow(slope, j * beta);
    }
    return {beta, c * sum};
}

}  // namespace detail

inline KernelProfile make_profile(const Kernel& kernel) {
    KernelProfile profile{.kernel = kernel};
    profile.kappa_prime_1 = single_layer_slope_at_one(kernel.activation(), kernel.calibration());
    try {
        const CriEstimate est = estimate_cri(kernel);
        profile.cri_beta = est.beta;
        profile.c1 = est.c1;
    } catch (const numeric_error&) {
        if (kernel.depth() == 1) {
            throw;
        }
        const CriEstimate base = estimate_cri(kernel.with_depth(1));
        const auto [beta, c] =
            detail::propagate_cri(base.beta, base.c1, profile.kappa_prime_1, kernel.depth(),
                                  !kernel.activation().finite_slope_at_one());
        profile.cri_beta = beta;
        profile.c1 = c;
        profile.cri_fitted = false;
    }
    profile.klass = classify(profile.cri_beta);
    if (std::isfinite(profile.kappa_prime_1)) {
        profile.regime_label = regime(profile.kappa_prime_1);
    }
    return profile;
}

inline KernelProfile make_profile(const Activation& sigma, double gamma_b, int depth = 1,
                                  KernelRoute route = KernelRoute::automatic) {
    return make_profile(Kernel(sigma, gamma_b, depth, route));
}

// κ applied L more times; scalars recomputed for the new depth.
inline KernelProfile compose_kernel(const KernelProfile& profile, int times) {
    if (times < 1) {
        throw std::domain_error("compose_kernel: L must be >= 1");
    }
    return make_profile(profile.kernel.composed(times));
}

// One-sided derivative of κ_L at u = 1, lim (1 − κ_L(1 − t))/t, by Richardson
// extrapolation on t, t/10, t/100. The start t is the largest of 1e-4, 1e-5, …
// with 1 − κ_L(1 − t) ≤ 1e-6; the eliminated error terms are t^{β−1} and the
// next power of the expansion, β the nominal index of the activation.
inline double kappa_prime_at_one(const Kernel& kernel) {
    const Activation& sigma = kernel.activation();
    if (!sigma.finite_slope_at_one() || classify(sigma.nominal_cri()) == KernelClass::fractal) {
        throw classification_error("kappa_prime_at_one: derivative diverges in the fractal class");
    }
    double t = 1e-4;
    double d0 = kernel.deficit(t);
    for (int guard = 0; guard < 200 && d0 > 1e-6; ++guard) {
        t *= 0.1;
        d0 = kernel.deficit(t);
    }
    const double beta = sigma.nominal_cri();
    const double p1 = beta - 1.0;
    const double p2 = beta < 2.0 ? 1.0 : 2.0;
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> ds{};
    for (int i = 0; i < 3; ++i) {
        const double ti = t * std::pow(0.1, i);
        ds[i] = (i == 0 ? d0 : kernel.deficit(ti)) / ti;
        m[i] = {1.0, std::pow(ti, p1), std::pow(ti, p2)};
    }
    // Solve D_i = K + a t_i^{p1} + b t_i^{p2} by Cramer's rule.
    auto det3 = [](const std::array<std::array<double, 3>, 3>& a) {
        return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
               a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
               a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    };
    auto num = m;
    for (int i = 0; i < 3; ++i) {
        num[i][0] = ds[i];
    }
    return det3(num) / det3(m);
}

inline double kappa_prime_at_one(const KernelProfile& profile) {
    if (profile.klass == KernelClass::fractal) {
        throw classification_error("kappa_prime_at_one: derivative diverges in the fractal class");
    }
    return kappa_prime_at_one(profile.kernel);
}

}  // namespace rnfgeo
