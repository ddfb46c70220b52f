#pragma once

// Finite-width random fully connected networks on S^d:
//
//     T_0(x) = W^{(0)} x + b^{(1)},   T_s(x) = W^{(s)} σ(T_{s−1}(x)) + b^{(s+1)},
//
// with widths n_1 … n_L and a scalar readout T_L. Entries of W^{(0)} have
// variance 1 − Γ_b, hidden and readout weights Γ_W / n_s, biases Γ_b.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rnfgeo/kernels.hpp"
#include "rnfgeo/parallel.hpp"
#include "rnfgeo/random.hpp"
#include "rnfgeo/stats.hpp"

namespace rnfgeo {

struct NetworkArchitecture {
    int input_dim = 2;  // sphere dimension d; inputs live in R^{d+1}
    std::vector<int> widths;
    Activation activation = Activation::relu();
    Calibration calibration;

    NetworkArchitecture(int d, std::vector<int> w, Activation sigma, double gamma_b)
        : input_dim(d),
          widths(std::move(w)),
          activation(std::move(sigma)),
          calibration(Calibration::for_activation(activation, gamma_b)) {
        if (d < 1) {
            throw std::domain_error("NetworkArchitecture: input dimension must be >= 1");
        }
        if (widths.empty()) {
            throw std::domain_error("NetworkArchitecture: need at least one hidden layer");
        }
        for (int n : widths) {
            if (n < 1) {
                throw std::domain_error("NetworkArchitecture: widths must be positive");
            }
        }
    }

    int depth() const noexcept { return static_cast<int>(widths.size()); }
    int in_features() const noexcept { return input_dim + 1; }
    // Columns of W^{(s)}, s = 0 … L.
    int fan_in(int s) const noexcept { return s == 0 ? in_features() : widths[s - 1]; }
    // Rows of W^{(s)}; the readout has one.
    int fan_out(int s) const noexcept { return s == depth() ? 1 : widths[s]; }
    double weight_variance(int s) const noexcept {
        return s == 0 ? 1.0 - calibration.gamma_b : calibration.gamma_w / fan_in(s);
    }
};

// Limit covariance of the readout: the first layer sees (1−Γ_b)u + Γ_b, the
// L hidden layers apply κ. Equals κ_L(u) when Γ_b = 0.
inline double network_kernel(const NetworkArchitecture& arch, double u) {
    const Kernel k(arch.activation, arch.calibration.gamma_b, arch.depth());
    const double g = arch.calibration.gamma_b;
    return k(std::clamp((1.0 - g) * u + g, -1.0, 1.0));
}

namespace detail {

inline std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

// Row `row` of W^{(layer)}; normals come in pairs from one Philox block at
// counter (layer, row, column pair, tag).
inline void weight_row(const NetworkArchitecture& arch, const rng::Key& key, int layer, int row,
                       std::span<double> out) {
    const double sd = std::sqrt(arch.weight_variance(layer));
    const std::size_t n = out.size();
    for (std::size_t c = 0; c < n; c += 2) {
        const rng::Counter ctr{u32(layer), u32(row), u32(c / 2),
                               static_cast<std::uint32_t>(rng::Tag::weight)};
        const auto z = rng::normal_pair(ctr, key);
        out[c] = sd * z[0];
        if (c + 1 < n) {
            out[c + 1] = sd * z[1];
        }
    }
}

// b^{(layer+1)}, the bias added after W^{(layer)}.
inline void bias_vector(const NetworkArchitecture& arch, const rng::Key& key, int layer,
                        std::span<double> out) {
    const double sd = std::sqrt(arch.calibration.gamma_b);
    for (std::size_t r = 0; r < out.size(); r += 2) {
        if (sd == 0.0) {
            out[r] = 0.0;
            if (r + 1 < out.size()) out[r + 1] = 0.0;
            continue;
        }
        const rng::Counter ctr{u32(layer), u32(r / 2), 0u,
                               static_cast<std::uint32_t>(rng::Tag::bias)};
        const auto z = rng::normal_pair(ctr, key);
        out[r] = sd * z[0];
        if (r + 1 < out.size()) {
            out[r + 1] = sd * z[1];
        }
    }
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += a[k] * b[k];
    }
    return s;
}

inline void check_points(const NetworkArchitecture& arch,
                         std::span<const std::vector<double>> points) {
    for (const auto& x : points) {
        if (static_cast<int>(x.size()) != arch.in_features()) {
            throw std::domain_error("network: point has the wrong dimension");
        }
        double norm2 = 0.0;
        for (double v : x) {
            norm2 += v * v;
        }
        if (!(std::abs(std::sqrt(norm2) - 1.0) <= 1e-12)) {
            throw std::domain_error("network: input points must have unit norm");
        }
    }
}

}  // namespace detail

struct NetworkRealization {
    NetworkArchitecture arch;
    std::vector<std::vector<double>> weights;  // W^{(s)} row-major, s = 0 … L
    std::vector<std::vector<double>> biases;   // b^{(s+1)}, s = 0 … L
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
};

inline NetworkRealization sample_network(const NetworkArchitecture& arch, std::uint64_t seed,
                                         std::uint64_t replica = 0) {
    NetworkRealization net{arch, {}, {}, seed, replica};
    const rng::Key key = rng::make_key(seed, replica);
    for (int s = 0; s <= arch.depth(); ++s) {
        const auto rows = static_cast<std::size_t>(arch.fan_out(s));
        const auto cols = static_cast<std::size_t>(arch.fan_in(s));
        std::vector<double> w(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            detail::weight_row(arch, key, s, static_cast<int>(r),
                               std::span<double>(w.data() + r * cols, cols));
        }
        std::vector<double> b(rows);
        detail::bias_vector(arch, key, s, b);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

// Pre-activations of the last hidden layer, T_{L−1}(x), for every point, and
// the readout T_L(x). Weights come either from a stored realization or are
// regenerated row by row; both paths perform identical arithmetic.
struct ForwardResult {
    std::vector<std::vector<double>> hidden;  // σ(T_{L−1}(x)) per point
    std::vector<double> output;
};

namespace detail {

// Activations are held feature-major (act[k·np + p]) so the inner loop runs
// across points; each output still sums its terms in column order.
struct NoLayerHook {
    void operator()(int, const std::vector<double>&, const std::vector<double>&) const {}
};

// hook(s, in, pre) sees each layer's input σ(T_{s−1}) (or x) and its
// pre-activation output T_s, both feature-major.
template <class RowSource, class BiasSource, class LayerHook = NoLayerHook>
ForwardResult forward(const NetworkArchitecture& arch, std::span<const std::vector<double>> points,
                      RowSource&& row_of, BiasSource&& bias_of, LayerHook&& hook = {}) {
    const std::size_t np = points.size();
    std::vector<double> act(static_cast<std::size_t>(arch.in_features()) * np);
    for (std::size_t p = 0; p < np; ++p) {
        for (std::size_t k = 0; k < points[p].size(); ++k) {
            act[k * np + p] = points[p][k];
        }
    }
    std::vector<double> row;
    std::vector<double> bias;
    std::vector<double> acc(np);
    ForwardResult res;
    for (int s = 0; s <= arch.depth(); ++s) {
        const auto rows = static_cast<std::size_t>(arch.fan_out(s));
        const auto cols = static_cast<std::size_t>(arch.fan_in(s));
        bias.assign(rows, 0.0);
        bias_of(s, std::span<double>(bias));
        std::vector<double> next(rows * np);
        row.resize(cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* w = row_of(s, static_cast<int>(r), std::span<double>(row));
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < cols; ++k) {
                const double wk = w[k];
                const double* a = act.data() + k * np;
                for (std::size_t p = 0; p < np; ++p) {
                    acc[p] += wk * a[p];
                }
            }
            for (std::size_t p = 0; p < np; ++p) {
                next[r * np + p] = acc[p] + bias[r];
            }
        }
        hook(s, act, next);
        if (s == arch.depth()) {
            res.output.assign(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(np));
            res.hidden.assign(np, std::vector<double>(cols));
            for (std::size_t k = 0; k < cols; ++k) {
                for (std::size_t p = 0; p < np; ++p) {
                    res.hidden[p][k] = act[k * np + p];
                }
            }
            break;
        }
        for (double& z : next) {
            z = arch.activation(z);
        }
        act = std::move(next);
    }
    return res;
}

}  // namespace detail

inline ForwardResult forward(const NetworkRealization& net,
                             std::span<const std::vector<double>> points) {
    detail::check_points(net.arch, points);
    return detail::forward(
        net.arch, points,
        [&](int s, int r, std::span<double>) {
            return net.weights[s].data() + static_cast<std::size_t>(r) * net.arch.fan_in(s);
        },
        [&](int s, std::span<double> out) {
            std::copy(net.biases[s].begin(), net.biases[s].end(), out.begin());
        });
}

// Same network as sample_network(arch, seed, replica), never stored in full.
inline ForwardResult forward_streaming(const NetworkArchitecture& arch, std::uint64_t seed,
                                       std::uint64_t replica,
                                       std::span<const std::vector<double>> points) {
    detail::check_points(arch, points);
    const rng::Key key = rng::make_key(seed, replica);
    return detail::forward(
        arch, points,
        [&](int s, int r, std::span<double> buf) {
            detail::weight_row(arch, key, s, r, buf);
            return static_cast<const double*>(buf.data());
        },
        [&](int s, std::span<double> out) { detail::bias_vector(arch, key, s, out); });
}

inline std::vector<double> evaluate(const NetworkRealization& net,
                                    std::span<const std::vector<double>> points) {
    return forward(net, points).output;
}

enum class KernelEstimator {
    // E[T(x)T(y) | hidden layer] = Γ_W/n_L · σ(h(x))·σ(h(y)) + Γ_b, averaged over nets.
    readout_integrated,
    // T(x)·T(y) with the sampled readout, averaged over nets.
    sampled_product,
};

struct KernelPoint {
    double u = 0.0;
    double empirical_cov = 0.0;
    double std_error = 0.0;
    double kappa_L = 0.0;
};

struct EmpiricalKernelOptions {
    KernelEstimator estimator = KernelEstimator::readout_integrated;
    unsigned workers = 1;
};

using PointPair = std::pair<std::vector<double>, std::vector<double>>;

// Monte Carlo covariance of the output of the depth-ℓ prefix network (widths
// n_1 … n_ℓ) for every ℓ = 1 … L, from one pass per replica. Weights are keyed
// by (layer, row, column), so the prefix is exactly the network that
// sample_network would draw for the shorter architecture, and row 0 of W^{(ℓ)}
// doubles as its readout. Replica r uses key (seed, r); standard errors are
// jackknife over replicas. Result [ℓ−1][k] belongs to pair k at depth ℓ.
inline std::vector<std::vector<KernelPoint>> empirical_kernel_by_depth(
    const NetworkArchitecture& arch, std::span<const PointPair> pairs, std::size_t n_replicas,
    std::uint64_t seed, const EmpiricalKernelOptions& options = {}) {
    if (n_replicas < 2) {
        throw std::domain_error("empirical_kernel: need at least two replicas");
    }
    // Distinct points only; pairs index into them.
    std::vector<std::vector<double>> points;
    std::vector<std::pair<std::size_t, std::size_t>> index;
    auto locate = [&](const std::vector<double>& x) {
        const auto it = std::find(points.begin(), points.end(), x);
        if (it != points.end()) {
            return static_cast<std::size_t>(it - points.begin());
        }
        points.push_back(x);
        return points.size() - 1;
    };
    for (const auto& [x, y] : pairs) {
        const std::size_t i = locate(x);
        index.emplace_back(i, locate(y));
    }
    detail::check_points(arch, points);
    const std::size_t np = points.size();
    const std::size_t npairs = pairs.size();
    const auto depth = static_cast<std::size_t>(arch.depth());
    // samples[ℓ−1][k][r]
    std::vector<std::vector<std::vector<double>>> samples(
        depth, std::vector<std::vector<double>>(npairs, std::vector<double>(n_replicas)));
    const double gamma_b = arch.calibration.gamma_b;
    parallel_for(n_replicas, options.workers, [&](std::size_t r) {
        const rng::Key key = rng::make_key(seed, r);
        auto hook = [&](int s, const std::vector<double>& in, const std::vector<double>& pre) {
            if (s == 0) {
                return;
            }
            auto& out = samples[static_cast<std::size_t>(s) - 1];
            const auto n = static_cast<std::size_t>(arch.fan_in(s));
            const double scale = arch.calibration.gamma_w / static_cast<double>(n);
            for (std::size_t k = 0; k < npairs; ++k) {
                const auto [i, j] = index[k];
                if (options.estimator == KernelEstimator::readout_integrated) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        acc += in[c * np + i] * in[c * np + j];
                    }
                    out[k][r] = scale * acc + gamma_b;
                } else {
                    out[k][r] = pre[i] * pre[j];
                }
            }
        };
        detail::forward(
            arch, points,
            [&](int s, int row, std::span<double> buf) {
                detail::weight_row(arch, key, s, row, buf);
                return static_cast<const double*>(buf.data());
            },
            [&](int s, std::span<double> out) { detail::bias_vector(arch, key, s, out); }, hook);
    });
    std::vector<std::vector<KernelPoint>> out(depth, std::vector<KernelPoint>(npairs));
    for (std::size_t l = 1; l <= depth; ++l) {
        const NetworkArchitecture prefix(
            arch.input_dim,
            std::vector<int>(arch.widths.begin(), arch.widths.begin() + static_cast<std::ptrdiff_t>(l)),
            arch.activation, gamma_b);
        for (std::size_t k = 0; k < npairs; ++k) {
            const auto& [x, y] = pairs[k];
            const double u = std::clamp(detail::dot(x.data(), y.data(), x.size()), -1.0, 1.0);
            const auto est = stats::jackknife_mean(samples[l - 1][k]);
            out[l - 1][k] = {u, est.mean, est.std_error, network_kernel(prefix, u)};
        }
    }
    return out;
}

// Monte Carlo covariance of the network output for each point pair.
inline std::vector<KernelPoint> empirical_kernel(const NetworkArchitecture& arch,
                                                 std::span<const PointPair> pairs,
                                                 std::size_t n_replicas, std::uint64_t seed,
                                                 const EmpiricalKernelOptions& options = {}) {
    return empirical_kernel_by_depth(arch, pairs, n_replicas, seed, options).back();
}

// Allowance for the O(1/n) finite-width bias: L / min width.
inline double width_bias_allowance(const NetworkArchitecture& arch) {
    int n = arch.widths.front();
    for (int w : arch.widths) {
        n = std::min(n, w);
    }
    return static_cast<double>(arch.depth()) / n;
}

// Unit vectors x = e_0 and y(ψ) = cos ψ e_0 + sin ψ e_1 in R^{d+1}, rotated so the
// pair's orientation varies with `tilt`.
inline PointPair pair_at_angle(int d, double psi, double tilt = 0.0) {
    std::vector<double> x(static_cast<std::size_t>(d) + 1, 0.0);
    std::vector<double> y(static_cast<std::size_t>(d) + 1, 0.0);
    const double ct = std::cos(tilt);
    const double st = std::sin(tilt);
    x[0] = ct;
    x[d] = st;
    y[0] = std::cos(psi) * ct;
    y[d] = std::cos(psi) * st;
    if (d >= 2) {
        y[1] = std::sin(psi);
    } else {
        y[0] = std::cos(psi) * ct - std::sin(psi) * st;
        y[d] = std::cos(psi) * st + std::sin(psi) * ct;
    }
    return {x, y};
}

// CSV `u,empirical_cov,std_error,kappa_L`.
inline void write_kernel_csv(std::ostream& os, std::span<const KernelPoint> rows) {
    os << "u,empirical_cov,std_error,kappa_L\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.u, r.empirical_cov,
                      r.std_error, r.kappa_L);
        os << buf;
    }
}

}  // namespace rnfgeo
