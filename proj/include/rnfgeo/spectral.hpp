#pragma once

// Gegenbauer expansion of isotropic covariances on S^d:
//
//     κ(⟨x, y⟩) = Σ_ℓ C_ℓ · n_{ℓ,d} / ω_d · G_{ℓ;d}(⟨x, y⟩),   G_{ℓ;d}(1) = 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rnfgeo/errors.hpp"
#include "rnfgeo/kernels.hpp"
#include "rnfgeo/quadrature.hpp"
#include "rnfgeo/stats.hpp"

namespace rnfgeo {

// Dimension of the space of degree-ℓ spherical harmonics on S^d.
inline std::uint64_t n_harmonics(int ell, int d) {
    if (ell < 0 || d < 2) {
        throw std::domain_error("n_harmonics: need ell >= 0 and d >= 2");
    }
    if (ell == 0) {
        return 1;
    }
    using u128 = unsigned __int128;
    constexpr u128 limit = std::numeric_limits<std::uint64_t>::max();
    // binom(ℓ+d−2, ℓ−1) = binom(ℓ+d−2, d−1), built by exact multiplicative steps.
    const auto n = static_cast<u128>(ell) + static_cast<u128>(d) - 2;
    u128 k = static_cast<u128>(d) - 1;
    if (k > n - k) {
        k = n - k;
    }
    u128 binom = 1;
    for (u128 i = 1; i <= k; ++i) {
        u128 next = 0;
        if (__builtin_mul_overflow(binom, n - k + i, &next)) {
            throw std::range_error("n_harmonics: overflow");
        }
        binom = next / i;
    }
    u128 total = 0;
    if (__builtin_mul_overflow(binom, static_cast<u128>(2 * static_cast<std::int64_t>(ell) + d - 1),
                               &total)) {
        throw std::range_error("n_harmonics: overflow");
    }
    total /= static_cast<u128>(ell);
    if (total > limit) {
        throw std::range_error("n_harmonics: overflow");
    }
    return static_cast<std::uint64_t>(total);
}

// Surface area ω_d of the unit sphere S^d ⊂ R^{d+1}.
inline double sphere_volume(int d) {
    if (d < 1) {
        throw std::domain_error("sphere_volume: d must be >= 1");
    }
    const double h = 0.5 * (d + 1);
    return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

namespace detail {

inline void check_gegenbauer_args(int ell, int d, double t) {
    if (ell < 0 || d < 2) {
        throw std::domain_error("gegenbauer: need ell >= 0 and d >= 2");
    }
    if (!(std::abs(t) <= 1.0)) {
        throw std::domain_error("gegenbauer: |t| must be <= 1");
    }
}

// G_{ℓ+1} = [(2ℓ+d−1) t G_ℓ − ℓ G_{ℓ−1}] / (ℓ+d−1), G_0 = 1, G_1 = t.
inline double gegenbauer_step(int ell, int d, double t, double g, double g_prev) {
    return ((2.0 * ell + d - 1.0) * t * g - ell * g_prev) / (ell + d - 1.0);
}

}  // namespace detail

// Gegenbauer polynomial normalized so that G_{ℓ;d}(1) = 1 (Legendre P_ℓ for d = 2).
inline double gegenbauer_eval(int ell, int d, double t) {
    detail::check_gegenbauer_args(ell, d, t);
    if (ell == 0) {
        return 1.0;
    }
    double g_prev = 1.0;
    double g = t;
    for (int k = 1; k < ell; ++k) {
        const double next = detail::gegenbauer_step(k, d, t, g, g_prev);
        g_prev = g;
        g = next;
    }
    return g;
}

// G_{0;d}(t) … G_{ℓ_max;d}(t).
inline std::vector<double> gegenbauer_all(int ell_max, int d, double t) {
    detail::check_gegenbauer_args(ell_max, d, t);
    std::vector<double> g(static_cast<std::size_t>(ell_max) + 1);
    g[0] = 1.0;
    if (ell_max >= 1) {
        g[1] = t;
    }
    for (int k = 1; k < ell_max; ++k) {
        g[k + 1] = detail::gegenbauer_step(k, d, t, g[k], g[k - 1]);
    }
    return g;
}

// G_{ℓ;d}(cos θ) from the Dirichlet–Mehler type representation
//
//   G(cos θ) = 2^{3−d} (d−2)! / (Γ((d−1)/2)² sin^{d−2} θ)
//              · ∫_0^θ cos((ℓ + (d−1)/2) ψ) (2 cos ψ − 2 cos θ)^{(d−3)/2} dψ.
//
// The upper half [θ/2, θ] is mapped by s² = cos ψ − cos θ, which removes the
// endpoint singularity for even d.
inline double gegenbauer_integral(int ell, int d, double theta) {
    if (ell < 0 || d < 2) {
        throw std::domain_error("gegenbauer_integral: need ell >= 0 and d >= 2");
    }
    if (!(theta > 0.0 && theta < 0.5 * std::numbers::pi)) {
        throw std::domain_error("gegenbauer_integral: theta must lie in (0, pi/2)");
    }
    const double nu = ell + 0.5 * (d - 1);
    const double power = 0.5 * (d - 3);
    const double cos_theta = std::cos(theta);
    auto lower = [&](double psi) {
        const double gap = 4.0 * std::sin(0.5 * (theta + psi)) * std::sin(0.5 * (theta - psi));
        return std::cos(nu * psi) * std::pow(gap, power);
    };
    // ψ(s) = arccos(cos θ + s²), dψ = −2 s ds / sin ψ, and (2 s²)^{(d−3)/2} · 2s = 2^{(d−1)/2} s^{d−2}.
    auto upper = [&](double s) {
        const double c = cos_theta + s * s;
        const double psi = std::acos(c);
        const double sin_psi = std::sqrt((1.0 - c) * (1.0 + c));
        return std::cos(nu * psi) * std::pow(2.0, 0.5 * (d - 1)) * std::pow(s, d - 2) / sin_psi;
    };
    const double half = 0.5 * theta;
    const double s_max = std::sqrt(2.0 * std::sin(0.5 * (theta + half)) * std::sin(0.5 * (theta - half)));
    const double g = std::tgamma(0.5 * (d - 1));
    const double prefactor =
        std::pow(2.0, 3 - d) * std::tgamma(d - 1.0) / (g * g * std::pow(std::sin(theta), d - 2));
    const double tol = 1e-11 / prefactor;
    const double integral = quad::adaptive_integrate(lower, 0.0, half, tol) +
                            quad::adaptive_integrate(upper, 0.0, s_max, tol);
    return prefactor * integral;
}

struct PowerSpectrum {
    int d = 2;
    int ell_max = 0;
    std::vector<double> C;
    std::string id;

    double max_entry() const {
        return C.empty() ? 0.0 : *std::max_element(C.begin(), C.end());
    }

    // Negative entries within 1e-10·max C are quadrature noise and read as 0;
    // anything more negative is an error.
    std::vector<double> clamped() const {
        const double tol = 1e-10 * std::max(max_entry(), 0.0);
        std::vector<double> out(C.size());
        for (std::size_t l = 0; l < C.size(); ++l) {
            if (C[l] < -tol) {
                throw spectrum_error("power spectrum entry " + std::to_string(l) +
                                     " is negative beyond tolerance");
            }
            out[l] = std::max(C[l], 0.0);
        }
        return out;
    }
};

inline PowerSpectrum make_spectrum(int d, std::vector<double> C, std::string id = {}) {
    if (d < 2 || C.empty()) {
        throw std::domain_error("make_spectrum: need d >= 2 and at least one entry");
    }
    PowerSpectrum s;
    s.d = d;
    s.ell_max = static_cast<int>(C.size()) - 1;
    s.C = std::move(C);
    s.id = std::move(id);
    return s;
}

// Nodes t_k and weights W_k with Σ W_k f(t_k) ≈ ∫_{−1}^{1} f(t) (1−t²)^{d/2−1} dt,
// from Gauss–Legendre in the angle: ∫_0^π f(cos θ) sin^{d−1} θ dθ.
struct SphereQuadrature {
    std::vector<double> t;
    std::vector<double> w;
};

inline SphereQuadrature sphere_quadrature(std::size_t nodes, int d) {
    if (d < 2) {
        throw std::domain_error("sphere_quadrature: d must be >= 2");
    }
    const quad::GaussLegendre& rule = quad::gauss_legendre(nodes);
    SphereQuadrature q;
    q.t.resize(nodes);
    q.w.resize(nodes);
    const double half = 0.5 * std::numbers::pi;
    for (std::size_t k = 0; k < nodes; ++k) {
        const double theta = half * (rule.nodes[k] + 1.0);
        q.t[k] = std::cos(theta);
        q.w[k] = half * rule.weights[k] * std::pow(std::sin(theta), d - 1);
    }
    return q;
}

// C_ℓ = (ω_d / n_{ℓ,d}) · ∫ κ G_ℓ w_d / ∫ G_ℓ² w_d with w_d(t) = (1−t²)^{d/2−1},
// both integrals on sphere_quadrature with max(512, 4·ℓ_max) nodes.
template <class Kappa>
PowerSpectrum compute_spectrum(const Kappa& kappa, int d, int ell_max, std::string id = {}) {
    if (d < 2) {
        throw std::domain_error("compute_spectrum: d must be >= 2");
    }
    if (ell_max < 0) {
        throw std::domain_error("compute_spectrum: ell_max must be >= 0");
    }
    const std::size_t nodes = std::max<std::size_t>(512, 4 * static_cast<std::size_t>(ell_max));
    const SphereQuadrature q = sphere_quadrature(nodes, d);
    const auto count = static_cast<std::size_t>(ell_max) + 1;
    std::vector<double> num(count, 0.0);
    std::vector<double> den(count, 0.0);
    for (std::size_t k = 0; k < nodes; ++k) {
        const double t = q.t[k];
        const double w = q.w[k];
        const double kw = static_cast<double>(kappa(t)) * w;
        double g_prev = 1.0;
        double g = 1.0;
        for (std::size_t l = 0; l < count; ++l) {
            if (l == 1) {
                g_prev = 1.0;
                g = t;
            } else if (l >= 2) {
                const double next =
                    detail::gegenbauer_step(static_cast<int>(l) - 1, d, t, g, g_prev);
                g_prev = g;
                g = next;
            }
            num[l] += kw * g;
            den[l] += w * g * g;
        }
    }
    const double omega = sphere_volume(d);
    std::vector<double> C(count);
    for (std::size_t l = 0; l < count; ++l) {
        if (!(den[l] >= 1e-300)) {
            throw std::range_error("compute_spectrum: ill-conditioned normalization");
        }
        C[l] = omega / static_cast<double>(n_harmonics(static_cast<int>(l), d)) * num[l] / den[l];
    }
    return make_spectrum(d, std::move(C), std::move(id));
}

inline PowerSpectrum compute_spectrum(const KernelProfile& profile, int d, int ell_max) {
    return compute_spectrum(profile.kernel, d, ell_max, profile.kernel.describe());
}

inline PowerSpectrum compute_spectrum(const Kernel& kernel, int d, int ell_max) {
    return compute_spectrum(kernel, d, ell_max, kernel.describe());
}

// Σ_ℓ C_ℓ n_{ℓ,d}/ω_d G_{ℓ;d}(t).
inline double reconstruct(const PowerSpectrum& spectrum, double t) {
    const auto g = gegenbauer_all(spectrum.ell_max, spectrum.d, t);
    const double omega = sphere_volume(spectrum.d);
    double sum = 0.0;
    for (int l = 0; l <= spectrum.ell_max; ++l) {
        sum += spectrum.C[l] * static_cast<double>(n_harmonics(l, spectrum.d)) / omega * g[l];
    }
    return sum;
}

// Fraction of a unit-variance field's variance carried by ℓ ≤ ℓ_max.
inline double explained_variance(const PowerSpectrum& spectrum) {
    const double omega = sphere_volume(spectrum.d);
    double sum = 0.0;
    for (int l = 0; l <= spectrum.ell_max; ++l) {
        sum += spectrum.C[l] * static_cast<double>(n_harmonics(l, spectrum.d)) / omega;
    }
    return sum;
}

struct SpectralIndexEstimate {
    double alpha = 0.0;
    std::pair<int, int> fit_range{0, 0};
    double r_squared = 0.0;
    std::size_t points = 0;
};

// α from the log–log slope of C_ℓ ~ ℓ^{−(α+d)} over ℓ ∈ [ℓ_max/4, ℓ_max].
// Entries at or below 1e-14·max C (the vanishing parity of odd kernels) are skipped.
inline SpectralIndexEstimate estimate_spectral_index(const PowerSpectrum& spectrum) {
    const int hi = spectrum.ell_max;
    const int lo = std::max(1, (hi + 3) / 4);
    const double floor = 1e-14 * spectrum.max_entry();
    std::vector<double> lx;
    std::vector<double> ly;
    for (int l = lo; l <= hi; ++l) {
        if (spectrum.C[l] > floor && spectrum.C[l] > 0.0) {
            lx.push_back(std::log(static_cast<double>(l)));
            ly.push_back(std::log(spectrum.C[l]));
        }
    }
    if (lx.size() < 8) {
        throw numeric_error("estimate_spectral_index: fewer than 8 usable entries");
    }
    const auto fit = stats::fit_line(lx, ly);
    SpectralIndexEstimate est;
    est.alpha = -fit.slope - spectrum.d;
    est.fit_range = {lo, hi};
    est.r_squared = fit.r_squared;
    est.points = lx.size();
    if (!(est.alpha > 0.0)) {
        throw numeric_error("estimate_spectral_index: non-positive alpha");
    }
    return est;
}

// CSV `ell,C_ell,n_ell`, 17 significant digits.
inline void write_spectrum_csv(std::ostream& os, const PowerSpectrum& spectrum) {
    os << "ell,C_ell,n_ell\n";
    char buf[64];
    for (int l = 0; l <= spectrum.ell_max; ++l) {
        std::snprintf(buf, sizeof buf, "%.17g", spectrum.C[l]);
        os << l << ',' << buf << ',' << n_harmonics(l, spectrum.d) << '\n';
    }
}

}  // namespace rnfgeo
