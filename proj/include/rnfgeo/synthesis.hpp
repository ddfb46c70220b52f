#pragma once

// Gaussian fields on S² from a power spectrum:
//
//     T(θ, φ) = Σ_ℓ Σ_m a_{ℓ,m} Y_{ℓ,m}(θ, φ),   a_{ℓ,m} ~ N(0, C_ℓ) independent,
//
// with real orthonormal harmonics Y_{ℓ,0} = λ_ℓ0(θ), √2 λ_ℓm(θ) cos mφ, √2 λ_ℓm(θ) sin mφ.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnfgeo/errors.hpp"
#include "rnfgeo/parallel.hpp"
#include "rnfgeo/random.hpp"
#include "rnfgeo/spectral.hpp"

namespace rnfgeo {

inline constexpr int kMaxSynthesisBand = 10000;

// θ_i = (i + ½)π/n_θ, φ_j = 2πj/n_φ.
struct SphericalGrid {
    int n_theta = 0;
    int n_phi = 0;

    SphericalGrid() = default;
    SphericalGrid(int nt, int np) : n_theta(nt), n_phi(np) {
        if (nt < 4) {
            throw std::domain_error("SphericalGrid: n_theta must be >= 4");
        }
        if (np < 8 || np % 2 != 0) {
            throw std::domain_error("SphericalGrid: n_phi must be even and >= 8");
        }
    }

    double theta(int i) const noexcept { return (i + 0.5) * std::numbers::pi / n_theta; }
    double phi(int j) const noexcept { return 2.0 * std::numbers::pi * j / n_phi; }
    double d_theta() const noexcept { return std::numbers::pi / n_theta; }
    double d_phi() const noexcept { return 2.0 * std::numbers::pi / n_phi; }
    std::size_t size() const noexcept {
        return static_cast<std::size_t>(n_theta) * static_cast<std::size_t>(n_phi);
    }

    friend bool operator==(const SphericalGrid&, const SphericalGrid&) = default;
};

// Real-basis coefficients. Within degree ℓ the index m = 1 … 2ℓ+1 runs over
// zonal, then cos 1φ, sin 1φ, cos 2φ, sin 2φ, …
struct HarmonicCoefficients {
    int ell_max = 0;
    std::vector<double> a;  // a[ℓ² + m − 1]
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::string spectrum_id;

    static std::size_t index(int ell, int m) {
        return static_cast<std::size_t>(ell) * static_cast<std::size_t>(ell) +
               static_cast<std::size_t>(m - 1);
    }
    double& at(int ell, int m) { return a[index(ell, m)]; }
    double at(int ell, int m) const { return a[index(ell, m)]; }
    // Coefficient of cos(order·φ) (order 0: zonal) and sin(order·φ).
    double cos_part(int ell, int order) const { return at(ell, order == 0 ? 1 : 2 * order); }
    double sin_part(int ell, int order) const { return at(ell, 2 * order + 1); }

    static HarmonicCoefficients zeros(int ell_max) {
        if (ell_max < 0) {
            throw std::domain_error("HarmonicCoefficients: ell_max must be >= 0");
        }
        HarmonicCoefficients c;
        c.ell_max = ell_max;
        c.a.assign(static_cast<std::size_t>(ell_max + 1) * static_cast<std::size_t>(ell_max + 1),
                   0.0);
        return c;
    }
};

// Independent N(0, C_ℓ) draws. The pair (cos, sin) of order m at degree ℓ
// comes from the Philox block at counter (ℓ, m, tag) under key (seed, replica).
inline HarmonicCoefficients sample_coefficients(const PowerSpectrum& spectrum, std::uint64_t seed,
                                                std::uint64_t replica) {
    if (spectrum.d != 2) {
        throw std::domain_error("sample_coefficients: synthesis is implemented on S^2 only");
    }
    const std::vector<double> C = spectrum.clamped();
    HarmonicCoefficients c = HarmonicCoefficients::zeros(spectrum.ell_max);
    c.seed = seed;
    c.replica = replica;
    c.spectrum_id = spectrum.id;
    const rng::Key key = rng::make_key(seed, replica);
    for (int l = 0; l <= spectrum.ell_max; ++l) {
        const double sd = std::sqrt(C[l]);
        if (sd == 0.0) {
            continue;
        }
        for (int m = 0; m <= l; ++m) {
            const rng::Counter ctr{static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(m),
                                   static_cast<std::uint32_t>(rng::Tag::harmonic), 0u};
            const auto z = rng::normal_pair(ctr, key);
            if (m == 0) {
                c.at(l, 1) = sd * z[0];
            } else {
                c.at(l, 2 * m) = sd * z[0];
                c.at(l, 2 * m + 1) = sd * z[1];
            }
        }
    }
    return c;
}

struct FieldRealization {
    SphericalGrid grid;
    std::vector<double> values;  // row-major, n_theta × n_phi
    std::string spectrum_id;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.n_phi + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.n_phi + j]; }
};

// Recurrence constants for the orthonormal associated Legendre functions
// λ_ℓm(θ) = √((2ℓ+1)/4π · (ℓ−m)!/(ℓ+m)!) P_ℓ^m(cos θ) (no Condon–Shortley sign).
class LegendreTable {
public:
    explicit LegendreTable(int ell_max) : ell_max_(ell_max) {
        if (ell_max < 0) {
            throw std::domain_error("LegendreTable: ell_max must be >= 0");
        }
        if (ell_max > kMaxSynthesisBand) {
            throw std::range_error("LegendreTable: ell_max above 1e4 is not supported");
        }
        offset_.resize(static_cast<std::size_t>(ell_max) + 2);
        std::size_t total = 0;
        for (int m = 0; m <= ell_max; ++m) {
            offset_[m] = total;
            total += static_cast<std::size_t>(ell_max - m + 1);
        }
        offset_[ell_max + 1] = total;
        a_.resize(total);
        b_.resize(total);
        for (int m = 0; m <= ell_max; ++m) {
            for (int l = m + 2; l <= ell_max; ++l) {
                const double ll = l;
                const double mm = m;
                const std::size_t k = offset_[m] + static_cast<std::size_t>(l - m);
                a_[k] = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
                b_[k] = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) /
                                  (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
            }
        }
    }

    int ell_max() const noexcept { return ell_max_; }

    // Sectoral value λ_mm(θ) as mantissa·2^e, so that sin^m θ never underflows.
    struct Seed {
        double p = 0.0;
        int e = 0;
    };

    static Seed first_seed() {
        Seed s;
        s.p = std::frexp(1.0 / std::sqrt(4.0 * std::numbers::pi), &s.e);
        return s;
    }

    // λ_mm = √((2m+1)/(2m)) sin θ · λ_{m−1,m−1}.
    static void advance(Seed& s, int m, double sin_theta) {
        int shift = 0;
        s.p = std::frexp(s.p * std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_theta, &shift);
        s.e += shift;
    }

    // λ_ℓm(θ) for ℓ = m … ℓ_max at fixed m, handed to visit(ℓ, value). Values
    // below the double range are skipped.
    template <class Visit>
    void for_order(int m, double cos_theta, double sin_theta, Visit&& visit) const {
        Seed seed = first_seed();
        for (int k = 1; k <= m; ++k) {
            advance(seed, k, sin_theta);
        }
        for_order(m, seed, cos_theta, visit);
    }

    template <class Visit>
    void for_order(int m, Seed seed, double cos_theta, Visit&& visit) const {
        int e = seed.e;
        const double p = seed.p;
        emit(m, p, e, visit);
        if (m == ell_max_) {
            return;
        }
        double prev = p;
        double cur = std::sqrt(2.0 * m + 3.0) * cos_theta * p;
        emit(m + 1, cur, e, visit);
        const std::size_t base = offset_[m];
        for (int l = m + 2; l <= ell_max_; ++l) {
            const std::size_t k = base + static_cast<std::size_t>(l - m);
            const double next = a_[k] * (cos_theta * cur - b_[k] * prev);
            prev = cur;
            cur = next;
            if (e < 0 && std::abs(cur) > 0x1.0p200) {
                const int shift = std::min(200, -e);
                prev = std::ldexp(prev, -shift);
                cur = std::ldexp(cur, -shift);
                e += shift;
            }
            emit(l, cur, e, visit);
        }
    }

private:
    template <class Visit>
    static void emit(int l, double p, int e, Visit& visit) {
        if (e == 0) {
            visit(l, p);
        } else if (e > -1000) {
            const double v = std::ldexp(p, e);
            if (v != 0.0) {
                visit(l, v);
            }
        }
    }

    int ell_max_;
    std::vector<std::size_t> offset_;
    std::vector<double> a_;
    std::vector<double> b_;
};

// Real orthonormal harmonic Y_{ℓ,m} (m = 1 … 2ℓ+1, basis order as in HarmonicCoefficients).
inline double real_harmonic(int ell, int m, double theta, double phi) {
    if (ell < 0 || m < 1 || m > 2 * ell + 1) {
        throw std::domain_error("real_harmonic: index out of range");
    }
    const int order = m / 2;
    double lambda = 0.0;
    LegendreTable table(ell);
    table.for_order(order, std::cos(theta), std::sin(theta), [&](int l, double v) {
        if (l == ell) {
            lambda = v;
        }
    });
    if (order == 0) {
        return lambda;
    }
    const double trig = (m % 2 == 0) ? std::cos(order * phi) : std::sin(order * phi);
    return std::sqrt(2.0) * lambda * trig;
}

namespace detail {

// FFTW complex-to-real plan for one row length, shared across threads.
inline fftw_plan row_plan(int n_phi) {
    static std::mutex mutex;
    static std::map<int, fftw_plan> plans;
    std::lock_guard lock(mutex);
    auto it = plans.find(n_phi);
    if (it != plans.end()) {
        return it->second;
    }
    std::vector<std::complex<double>> in(static_cast<std::size_t>(n_phi) / 2 + 1);
    std::vector<double> out(static_cast<std::size_t>(n_phi));
    fftw_plan plan = fftw_plan_dft_c2r_1d(n_phi, reinterpret_cast<fftw_complex*>(in.data()),
                                          out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) {
        throw std::runtime_error("FFTW planning failed");
    }
    plans.emplace(n_phi, plan);
    return plan;
}

// Adds A cos(mφ) + B sin(mφ) to the half-spectrum X of a c2r transform of
// length n, folding orders at or beyond the Nyquist index.
inline void add_order(std::vector<std::complex<double>>& X, int n, int m, double A, double B) {
    const int r = m % n;
    const int half = n / 2;
    if (r == 0) {
        X[0] += A;
    } else if (r == half) {
        X[half] += A;
    } else if (r < half) {
        X[r] += std::complex<double>(0.5 * A, -0.5 * B);
    } else {
        X[n - r] += std::complex<double>(0.5 * A, 0.5 * B);
    }
}

}  // namespace detail

// Field values on the grid: Legendre sums per θ row (north/south pairs share
// them through λ_ℓm(π−θ) = (−1)^{ℓ+m} λ_ℓm(θ)), then one real FFT per row.
inline FieldRealization synthesize(const HarmonicCoefficients& coeffs, const SphericalGrid& grid,
                                   unsigned workers = 1) {
    if (coeffs.ell_max > kMaxSynthesisBand) {
        throw std::range_error("synthesize: ell_max above 1e4 is not supported");
    }
    const int L = coeffs.ell_max;
    const int nt = grid.n_theta;
    const int np = grid.n_phi;
    FieldRealization field;
    field.grid = grid;
    field.values.assign(grid.size(), 0.0);
    field.spectrum_id = coeffs.spectrum_id;
    field.seed = coeffs.seed;
    field.replica = coeffs.replica;

    // Order-major copy: for order m, (cos, sin) coefficients for ℓ = m … L.
    std::vector<std::size_t> start(static_cast<std::size_t>(L) + 1);
    std::vector<double> cs;
    cs.reserve(static_cast<std::size_t>(L + 1) * static_cast<std::size_t>(L + 2));
    for (int m = 0; m <= L; ++m) {
        start[m] = cs.size();
        for (int l = m; l <= L; ++l) {
            cs.push_back(coeffs.cos_part(l, m));
            cs.push_back(m == 0 ? 0.0 : coeffs.sin_part(l, m));
        }
    }
    const LegendreTable table(L);
    const fftw_plan plan = detail::row_plan(np);
    const double root2 = std::sqrt(2.0);
    const int pairs = (nt + 1) / 2;

    parallel_for(static_cast<std::size_t>(pairs), workers, [&](std::size_t pi) {
        const int north = static_cast<int>(pi);
        const int south = nt - 1 - north;
        const double theta = grid.theta(north);
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        std::vector<std::complex<double>> xn(static_cast<std::size_t>(np) / 2 + 1);
        std::vector<std::complex<double>> xs(static_cast<std::size_t>(np) / 2 + 1);
        LegendreTable::Seed seed = LegendreTable::first_seed();
        for (int m = 0; m <= L; ++m) {
            if (m > 0) {
                LegendreTable::advance(seed, m, st);
            }
            // Split by parity of ℓ + m so the south row follows by sign flips.
            double even_c = 0.0;
            double even_s = 0.0;
            double odd_c = 0.0;
            double odd_s = 0.0;
            const double* row = cs.data() + start[m];
            table.for_order(m, seed, ct, [&](int l, double lambda) {
                const double* ab = row + 2 * static_cast<std::size_t>(l - m);
                if (((l + m) & 1) == 0) {
                    even_c += ab[0] * lambda;
                    even_s += ab[1] * lambda;
                } else {
                    odd_c += ab[0] * lambda;
                    odd_s += ab[1] * lambda;
                }
            });
            const double w = m == 0 ? 1.0 : root2;
            detail::add_order(xn, np, m, w * (even_c + odd_c), w * (even_s + odd_s));
            if (south != north) {
                detail::add_order(xs, np, m, w * (even_c - odd_c), w * (even_s - odd_s));
            }
        }
        fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(xn.data()),
                             field.values.data() + static_cast<std::size_t>(north) * np);
        if (south != north) {
            fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(xs.data()),
                                 field.values.data() + static_cast<std::size_t>(south) * np);
        }
    });
    return field;
}

// Unbiased variance across realizations at grid node (i, j).
inline double field_variance(std::span<const FieldRealization> realizations, int i, int j) {
    if (realizations.size() < 2) {
        throw std::domain_error("field_variance: need at least two realizations");
    }
    std::vector<double> v;
    v.reserve(realizations.size());
    for (const auto& r : realizations) {
        v.push_back(r.at(i, j));
    }
    return stats::sample_variance(v);
}

// CSV `i,j,theta,phi,value`.
inline void write_field_csv(std::ostream& os, const FieldRealization& field) {
    os << "i,j,theta,phi,value\n";
    char buf[128];
    for (int i = 0; i < field.grid.n_theta; ++i) {
        for (int j = 0; j < field.grid.n_phi; ++j) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", i, j, field.grid.theta(i),
                          field.grid.phi(j), field.at(i, j));
            os << buf;
        }
    }
}

}  // namespace rnfgeo
