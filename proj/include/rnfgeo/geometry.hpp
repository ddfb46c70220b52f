#pragma once

// Level sets {T = u} of gridded fields on S²: length of the iso-line and area
// of the excursion {T > u}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnfgeo/errors.hpp"
#include "rnfgeo/parallel.hpp"
#include "rnfgeo/quadrature.hpp"
#include "rnfgeo/spectral.hpp"
#include "rnfgeo/stats.hpp"
#include "rnfgeo/synthesis.hpp"

namespace rnfgeo {

struct LevelSetSummary {
    double u = 0.0;
    double total_length = 0.0;
    double excursion_area = 0.0;
    std::size_t n_segments = 0;
    int n_theta = 0;
    int n_phi = 0;
};

namespace detail {

struct Vertex {
    double theta;
    double phi;  // unwrapped within a cell
    double value;
};

inline double segment_length(double t1, double p1, double t2, double p2) {
    const double dt = t2 - t1;
    const double s = std::sin(0.5 * (t1 + t2));
    const double dp = p2 - p1;
    return std::sqrt(dt * dt + s * s * dp * dp);
}

struct Crossing {
    double theta;
    double phi;
};

inline Crossing crossing(const Vertex& a, const Vertex& b, double u) {
    const double t = (u - a.value) / (b.value - a.value);
    return {a.theta + t * (b.theta - a.theta), a.phi + t * (b.phi - a.phi)};
}

inline double segment(const Crossing& p, const Crossing& q) {
    return segment_length(p.theta, p.phi, q.theta, q.phi);
}

// Marching squares on the quad v0 v1 v2 v3 (counter-clockwise). Returns the
// iso-line length inside the cell and adds the segment count.
inline double quad_length(const Vertex* v, double u, std::size_t& segments) {
    unsigned mask = 0;
    for (int k = 0; k < 4; ++k) {
        if (v[k].value > u) {
            mask |= 1u << k;
        }
    }
    if (mask == 0 || mask == 15) {
        return 0.0;
    }
    auto edge = [&](int k) { return crossing(v[k], v[(k + 1) % 4], u); };
    // Crossed edges: edge k joins v[k] and v[k+1].
    int crossed[4];
    int n = 0;
    for (int k = 0; k < 4; ++k) {
        const bool a = (mask >> k) & 1u;
        const bool b = (mask >> ((k + 1) % 4)) & 1u;
        if (a != b) {
            crossed[n++] = k;
        }
    }
    if (n == 2) {
        segments += 1;
        return segment(edge(crossed[0]), edge(crossed[1]));
    }
    // Saddle: all four edges crossed. The centre decides which diagonal pair
    // of corners is connected.
    segments += 2;
    const double centre = 0.25 * (v[0].value + v[1].value + v[2].value + v[3].value);
    const bool centre_above = centre > u;
    const bool v0_above = mask & 1u;
    if (centre_above == v0_above) {
        // v0 joins v2 through the centre: cut off v1 and v3.
        return segment(edge(0), edge(1)) + segment(edge(2), edge(3));
    }
    // v1 joins v3: cut off v0 and v2.
    return segment(edge(3), edge(0)) + segment(edge(1), edge(2));
}

inline double triangle_length(const Vertex* v, double u, std::size_t& segments) {
    unsigned mask = 0;
    for (int k = 0; k < 3; ++k) {
        if (v[k].value > u) {
            mask |= 1u << k;
        }
    }
    if (mask == 0 || mask == 7) {
        return 0.0;
    }
    Crossing pts[2];
    int n = 0;
    for (int k = 0; k < 3; ++k) {
        const bool a = (mask >> k) & 1u;
        const bool b = (mask >> ((k + 1) % 3)) & 1u;
        if (a != b) {
            pts[n++] = crossing(v[k], v[(k + 1) % 3], u);
        }
    }
    segments += 1;
    return segment(pts[0], pts[1]);
}

// Iterates all cells of the grid: quads between adjacent rows and triangle fans
// to the poles (pole value: mean of the adjacent row). visit receives the
// vertices, their count, and the cell's exact area.
template <class Visit>
void for_each_cell(const FieldRealization& field, Visit&& visit) {
    const SphericalGrid& g = field.grid;
    const int nt = g.n_theta;
    const int np = g.n_phi;
    const double dphi = g.d_phi();
    auto row_mean = [&](int i) {
        double s = 0.0;
        for (int j = 0; j < np; ++j) {
            s += field.at(i, j);
        }
        return s / np;
    };
    const double north = row_mean(0);
    const double south = row_mean(nt - 1);
    const double theta_top = g.theta(0);
    const double theta_bottom = g.theta(nt - 1);
    const double cap = (1.0 - std::cos(theta_top)) * dphi;
    Vertex v[4];
    for (int j = 0; j < np; ++j) {
        const int jn = (j + 1) % np;
        const double p0 = g.phi(j);
        const double p1 = p0 + dphi;
        v[0] = {0.0, p0, north};
        v[1] = {theta_top, p0, field.at(0, j)};
        v[2] = {theta_top, p1, field.at(0, jn)};
        visit(v, 3, cap);
    }
    for (int i = 0; i + 1 < nt; ++i) {
        const double t0 = g.theta(i);
        const double t1 = g.theta(i + 1);
        const double area = (std::cos(t0) - std::cos(t1)) * dphi;
        for (int j = 0; j < np; ++j) {
            const int jn = (j + 1) % np;
            const double p0 = g.phi(j);
            const double p1 = p0 + dphi;
            v[0] = {t0, p0, field.at(i, j)};
            v[1] = {t1, p0, field.at(i + 1, j)};
            v[2] = {t1, p1, field.at(i + 1, jn)};
            v[3] = {t0, p1, field.at(i, jn)};
            visit(v, 4, area);
        }
    }
    for (int j = 0; j < np; ++j) {
        const int jn = (j + 1) % np;
        const double p0 = g.phi(j);
        const double p1 = p0 + dphi;
        v[0] = {std::numbers::pi, p0, south};
        v[1] = {theta_bottom, p1, field.at(nt - 1, jn)};
        v[2] = {theta_bottom, p0, field.at(nt - 1, j)};
        visit(v, 3, cap);
    }
}

}  // namespace detail

// Iso-line length and excursion area at level u. Area counts the fraction of
// corners above u in each cell times the cell's exact spherical area.
inline LevelSetSummary extract_level_set(const FieldRealization& field, double u) {
    if (!std::isfinite(u)) {
        throw std::domain_error("extract_level_set: level must be finite");
    }
    LevelSetSummary s;
    s.u = u;
    s.n_theta = field.grid.n_theta;
    s.n_phi = field.grid.n_phi;
    detail::for_each_cell(field, [&](const detail::Vertex* v, int n, double area) {
        int above = 0;
        for (int k = 0; k < n; ++k) {
            above += v[k].value > u ? 1 : 0;
        }
        s.excursion_area += area * above / n;
        if (above != 0 && above != n) {
            s.total_length += n == 4 ? detail::quad_length(v, u, s.n_segments)
                                     : detail::triangle_length(v, u, s.n_segments);
        }
    });
    return s;
}

// Iso-line lengths for many levels in one pass over the cells; only levels
// inside each cell's value range are visited.
inline std::vector<double> level_lengths(const FieldRealization& field,
                                         std::span<const double> levels) {
    if (!std::is_sorted(levels.begin(), levels.end())) {
        throw std::domain_error("level_lengths: levels must be sorted");
    }
    std::vector<double> out(levels.size(), 0.0);
    std::size_t segments = 0;
    detail::for_each_cell(field, [&](const detail::Vertex* v, int n, double) {
        double lo = v[0].value;
        double hi = v[0].value;
        for (int k = 1; k < n; ++k) {
            lo = std::min(lo, v[k].value);
            hi = std::max(hi, v[k].value);
        }
        // Crossing iff lo <= u < hi.
        auto first = std::lower_bound(levels.begin(), levels.end(), lo);
        for (auto it = first; it != levels.end() && *it < hi; ++it) {
            const auto idx = static_cast<std::size_t>(it - levels.begin());
            out[idx] += n == 4 ? detail::quad_length(v, *it, segments)
                               : detail::triangle_length(v, *it, segments);
        }
    });
    return out;
}

// Expected length ω_{d−1} κ'(1)^{L/2} e^{−u²/2} of {T_L = u}.
inline double theoretical_length(int d, double kappa_prime_1, int L, double u) {
    if (!(kappa_prime_1 > 0.0)) {
        throw std::domain_error("theoretical_length: kappa'(1) must be positive");
    }
    if (d < 2 || L < 0) {
        throw std::domain_error("theoretical_length: need d >= 2 and L >= 0");
    }
    return sphere_volume(d - 1) * std::pow(kappa_prime_1, 0.5 * L) * std::exp(-0.5 * u * u);
}

enum class NodalMethod {
    direct,       // length of the sampled field's level set
    conditioned,  // expectation over the monopole a_00 given the rest of the field
};

struct NodalOptions {
    NodalMethod method = NodalMethod::conditioned;
    // Level spacing for the conditioned estimator, as a fraction of the monopole sd.
    double level_step = 1.0 / 16.0;
    unsigned workers = 1;
};

// Per-replica measurements at each requested level.
struct ReplicaMeasurement {
    std::uint64_t replica = 0;
    std::vector<double> length;
    std::vector<double> area;
};

namespace detail {

// E[len{T' + σ0 Z = u}] for Z standard normal, from the level-set lengths of T'
// on an equispaced level grid (trapezoid rule in v with weight φ((u − v)/σ0)/σ0).
inline std::vector<double> conditioned_lengths(const FieldRealization& rest, double sigma0,
                                               std::span<const double> us, double step_fraction) {
    const auto [mn, mx] = std::minmax_element(rest.values.begin(), rest.values.end());
    const double u_lo = *std::min_element(us.begin(), us.end());
    const double u_hi = *std::max_element(us.begin(), us.end());
    const double lo = std::max(*mn, u_lo - 9.0 * sigma0);
    const double hi = std::min(*mx, u_hi + 9.0 * sigma0);
    std::vector<double> out(us.size(), 0.0);
    if (!(hi > lo)) {
        return out;
    }
    // The step must resolve both the Gaussian weight and the range of T'.
    const double h = std::min(step_fraction * sigma0, (hi - lo) / 256.0);
    const auto count = static_cast<std::size_t>(std::ceil((hi - lo) / h)) + 1;
    const double step = (hi - lo) / static_cast<double>(count - 1);
    std::vector<double> levels(count);
    for (std::size_t k = 0; k < count; ++k) {
        levels[k] = lo + step * static_cast<double>(k);
    }
    const std::vector<double> len = level_lengths(rest, levels);
    for (std::size_t q = 0; q < us.size(); ++q) {
        double acc = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            const double w = (k == 0 || k + 1 == count) ? 0.5 : 1.0;
            acc += w * len[k] * quad::normal_pdf((us[q] - levels[k]) / sigma0);
        }
        out[q] = acc * step / sigma0;
    }
    return out;
}

}  // namespace detail

// One replica: coefficients keyed by (seed, replica), field on the grid,
// length and area at each level. Areas are always measured on the full field.
inline ReplicaMeasurement measure_replica(const PowerSpectrum& spectrum, const SphericalGrid& grid,
                                          std::span<const double> us, std::uint64_t seed,
                                          std::uint64_t replica, const NodalOptions& options) {
    HarmonicCoefficients coeffs = sample_coefficients(spectrum, seed, replica);
    ReplicaMeasurement m;
    m.replica = replica;
    m.length.resize(us.size());
    m.area.resize(us.size());
    const double c0 = std::max(spectrum.C[0], 0.0);
    const double sigma0 = std::sqrt(c0 / (4.0 * std::numbers::pi));
    const bool conditioned = options.method == NodalMethod::conditioned && sigma0 > 0.0;
    if (!conditioned) {
        const FieldRealization field = synthesize(coeffs, grid);
        for (std::size_t q = 0; q < us.size(); ++q) {
            const LevelSetSummary s = extract_level_set(field, us[q]);
            m.length[q] = s.total_length;
            m.area[q] = s.excursion_area;
        }
        return m;
    }
    const double a00 = coeffs.at(0, 1);
    coeffs.at(0, 1) = 0.0;
    FieldRealization field = synthesize(coeffs, grid);
    const std::vector<double> len =
        detail::conditioned_lengths(field, sigma0, us, options.level_step);
    const double shift = a00 / std::sqrt(4.0 * std::numbers::pi);
    for (double& v : field.values) {
        v += shift;
    }
    for (std::size_t q = 0; q < us.size(); ++q) {
        m.length[q] = len[q];
        m.area[q] = extract_level_set(field, us[q]).excursion_area;
    }
    return m;
}

inline std::vector<ReplicaMeasurement> measure_replicas(const PowerSpectrum& spectrum,
                                                        const SphericalGrid& grid,
                                                        std::span<const double> us,
                                                        std::size_t n_replicas, std::uint64_t seed,
                                                        const NodalOptions& options = {}) {
    std::vector<ReplicaMeasurement> out(n_replicas);
    parallel_for(n_replicas, options.workers, [&](std::size_t r) {
        out[r] = measure_replica(spectrum, grid, us, seed, r, options);
    });
    return out;
}

struct NodalEstimate {
    double u = 0.0;
    stats::Estimate length;
    stats::Estimate area;
};

inline std::vector<NodalEstimate> summarize(std::span<const ReplicaMeasurement> replicas,
                                            std::span<const double> us) {
    std::vector<NodalEstimate> out(us.size());
    std::vector<double> len(replicas.size());
    std::vector<double> area(replicas.size());
    for (std::size_t q = 0; q < us.size(); ++q) {
        for (std::size_t r = 0; r < replicas.size(); ++r) {
            len[r] = replicas[r].length[q];
            area[r] = replicas[r].area[q];
        }
        out[q].u = us[q];
        out[q].length = stats::jackknife_mean(len);
        out[q].area = stats::jackknife_mean(area);
    }
    return out;
}

// Mean iso-line length over replicas with its jackknife standard error.
inline stats::Estimate mean_nodal_length(const PowerSpectrum& spectrum, const SphericalGrid& grid,
                                         double u, std::size_t n_replicas, std::uint64_t seed,
                                         const NodalOptions& options = {}) {
    if (n_replicas < 2) {
        throw std::domain_error("mean_nodal_length: need at least two replicas");
    }
    const double us[1] = {u};
    const auto reps = measure_replicas(spectrum, grid, us, n_replicas, seed, options);
    return summarize(reps, us)[0].length;
}

struct ScalingPoint {
    SphericalGrid grid;
    int ell_max = 0;
    stats::Estimate length;
};

struct ScalingReport {
    std::vector<ScalingPoint> points;
    double dimension = 1.0;      // clamped to [1, 2]
    double raw_dimension = 1.0;  // before clamping
    double r_squared = 0.0;
    std::vector<ReplicaMeasurement> replicas;  // per resolution, concatenated
};

// Mean length at each resolution of a doubling ladder, with the spectrum for
// each grid supplied by `spectrum_for`. D comes from length ∝ δ^{1−D}, δ = π/n_θ.
inline ScalingReport length_vs_resolution(
    const std::function<PowerSpectrum(const SphericalGrid&)>& spectrum_for, double u,
    std::span<const SphericalGrid> resolutions, std::size_t n_replicas, std::uint64_t seed,
    const NodalOptions& options = {}) {
    if (resolutions.size() < 3) {
        throw config_error("resolutions", "need at least three resolutions");
    }
    for (std::size_t k = 1; k < resolutions.size(); ++k) {
        if (resolutions[k].n_theta != 2 * resolutions[k - 1].n_theta ||
            resolutions[k].n_phi != 2 * resolutions[k - 1].n_phi) {
            throw config_error("resolutions", "each resolution must double the previous one");
        }
    }
    if (n_replicas < 2) {
        throw config_error("n_replicas", "need at least two replicas");
    }
    ScalingReport report;
    std::vector<double> lx;
    std::vector<double> ly;
    const double us[1] = {u};
    for (const SphericalGrid& grid : resolutions) {
        const PowerSpectrum spectrum = spectrum_for(grid);
        auto reps = measure_replicas(spectrum, grid, us, n_replicas, seed, options);
        const auto est = summarize(reps, us)[0];
        report.points.push_back({grid, spectrum.ell_max, est.length});
        report.replicas.insert(report.replicas.end(), reps.begin(), reps.end());
        lx.push_back(std::log(std::numbers::pi / grid.n_theta));
        ly.push_back(std::log(est.length.mean));
    }
    const auto fit = stats::fit_line(lx, ly);
    report.raw_dimension = 1.0 - fit.slope;
    report.dimension = std::clamp(report.raw_dimension, 1.0, 2.0);
    report.r_squared = fit.r_squared;
    return report;
}

// CSV `resolution_ntheta,resolution_nphi,ell_max,u,replica,length,area`.
inline void write_geometry_header(std::ostream& os) {
    os << "resolution_ntheta,resolution_nphi,ell_max,u,replica,length,area\n";
}

inline void write_geometry_rows(std::ostream& os, const SphericalGrid& grid, int ell_max,
                                std::span<const double> us,
                                std::span<const ReplicaMeasurement> replicas) {
    char buf[192];
    for (const auto& r : replicas) {
        for (std::size_t q = 0; q < us.size(); ++q) {
            std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%llu,%.17g,%.17g\n", grid.n_theta,
                          grid.n_phi, ell_max, us[q], static_cast<unsigned long long>(r.replica),
                          r.length[q], r.area[q]);
            os << buf;
        }
    }
}

}  // namespace rnfgeo
