#pragma once

// Experiment configuration, orchestration and CSV reporting.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "rnfgeo/errors.hpp"
#include "rnfgeo/geometry.hpp"
#include "rnfgeo/kernels.hpp"
#include "rnfgeo/network.hpp"
#include "rnfgeo/spectral.hpp"
#include "rnfgeo/stats.hpp"
#include "rnfgeo/synthesis.hpp"

namespace rnfgeo {

enum class Experiment { kernel, spectrum, simulate, nodal, fractal_scan, variance_scan, network_check };

inline std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::kernel: return "kernel";
        case Experiment::spectrum: return "spectrum";
        case Experiment::simulate: return "simulate";
        case Experiment::nodal: return "nodal";
        case Experiment::fractal_scan: return "fractal-scan";
        case Experiment::variance_scan: return "variance-scan";
        case Experiment::network_check: return "network-check";
    }
    return "?";
}

inline std::optional<Experiment> experiment_from_string(std::string_view s) {
    for (Experiment e : {Experiment::kernel, Experiment::spectrum, Experiment::simulate,
                         Experiment::nodal, Experiment::fractal_scan, Experiment::variance_scan,
                         Experiment::network_check}) {
        if (to_string(e) == s) {
            return e;
        }
    }
    return std::nullopt;
}

// ell_max = 0 and n_theta = n_phi = 0 stand for `auto` (nodal only).
struct ExperimentConfig {
    Experiment experiment = Experiment::nodal;
    std::string activation = "relu";  // heaviside relu leaky_relu gaussian tanh logistic
    double slope = 0.01;              // leaky_relu
    double a = 1.0;                   // gaussian
    double gamma_b = 0.0;
    int d = 2;
    std::vector<int> depths{1};
    std::vector<double> levels{0.0};
    int ell_max = 64;
    int ell_max_cap = 1024;
    double gradient_fraction = 0.999;
    int n_theta = 256;
    int n_phi = 512;
    std::size_t n_replicas = 200;
    std::uint64_t seed = 1;
    std::uint64_t replica = 0;         // simulate
    std::string method = "conditioned";  // nodal: conditioned | direct
    std::vector<int> resolutions{64, 128, 256, 512};  // fractal-scan, n_theta; n_phi = 2 n_theta
    std::string ell_max_rule = "resolution";           // fractal-scan: resolution | fixed
    int width = 1000;
    int angles = 9;
    std::string estimator = "integrated";  // network-check: integrated | product
    int kernel_points = 21;
    std::string output;  // empty: standard output

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || text.empty()) {
        throw config_error(key, "cannot parse '" + text + "'");
    }
    return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const std::string& item : split_list(text)) {
        out.push_back(parse_number<T>(key, item));
    }
    if (out.empty()) {
        throw config_error(key, "empty list");
    }
    return out;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        if constexpr (std::is_floating_point_v<T>) {
            out += fmt(v[i]);
        } else {
            out += std::to_string(v[i]);
        }
    }
    return out;
}

}  // namespace detail

// Flat `key = value` lines; `#` starts a comment; lists are comma-separated.
// Keys present in the text are appended to `keys` when given.
inline ExperimentConfig parse_config(std::string_view text,
                                     std::vector<std::string>* keys = nullptr) {
    ExperimentConfig c;
    std::map<std::string, std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("line " + std::to_string(line_no), "expected key = value");
        }
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (!seen.emplace(key, value).second) {
            throw config_error(key, "duplicate key");
        }
        if (keys != nullptr) {
            keys->push_back(key);
        }
        using detail::parse_list;
        using detail::parse_number;
        if (key == "experiment") {
            const auto e = experiment_from_string(value);
            if (!e) {
                throw config_error(key, "unknown experiment '" + value + "'");
            }
            c.experiment = *e;
        } else if (key == "activation") {
            c.activation = value;
        } else if (key == "slope") {
            c.slope = parse_number<double>(key, value);
        } else if (key == "a") {
            c.a = parse_number<double>(key, value);
        } else if (key == "gamma_b") {
            c.gamma_b = parse_number<double>(key, value);
        } else if (key == "d") {
            c.d = parse_number<int>(key, value);
        } else if (key == "depths") {
            c.depths = parse_list<int>(key, value);
        } else if (key == "levels") {
            c.levels = parse_list<double>(key, value);
        } else if (key == "ell_max") {
            c.ell_max = value == "auto" ? 0 : parse_number<int>(key, value);
        } else if (key == "ell_max_cap") {
            c.ell_max_cap = parse_number<int>(key, value);
        } else if (key == "gradient_fraction") {
            c.gradient_fraction = parse_number<double>(key, value);
        } else if (key == "grid") {
            if (value == "auto") {
                c.n_theta = 0;
                c.n_phi = 0;
            } else {
                const auto x = value.find('x');
                if (x == std::string::npos) {
                    throw config_error(key, "expected <n_theta>x<n_phi> or auto");
                }
                c.n_theta = parse_number<int>(key, detail::trim(value.substr(0, x)));
                c.n_phi = parse_number<int>(key, detail::trim(value.substr(x + 1)));
            }
        } else if (key == "n_replicas") {
            c.n_replicas = parse_number<std::size_t>(key, value);
        } else if (key == "seed") {
            c.seed = parse_number<std::uint64_t>(key, value);
        } else if (key == "replica") {
            c.replica = parse_number<std::uint64_t>(key, value);
        } else if (key == "method") {
            c.method = value;
        } else if (key == "resolutions") {
            c.resolutions = parse_list<int>(key, value);
        } else if (key == "ell_max_rule") {
            c.ell_max_rule = value;
        } else if (key == "width") {
            c.width = parse_number<int>(key, value);
        } else if (key == "angles") {
            c.angles = parse_number<int>(key, value);
        } else if (key == "estimator") {
            c.estimator = value;
        } else if (key == "kernel_points") {
            c.kernel_points = parse_number<int>(key, value);
        } else if (key == "output") {
            c.output = value;
        } else {
            throw config_error(key, "unknown key");
        }
    }
    return c;
}

// Every key in a fixed order; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
    using detail::fmt;
    using detail::join;
    std::ostringstream os;
    os << "experiment = " << to_string(c.experiment) << '\n'
       << "activation = " << c.activation << '\n'
       << "slope = " << fmt(c.slope) << '\n'
       << "a = " << fmt(c.a) << '\n'
       << "gamma_b = " << fmt(c.gamma_b) << '\n'
       << "d = " << c.d << '\n'
       << "depths = " << join(c.depths) << '\n'
       << "levels = " << join(c.levels) << '\n'
       << "ell_max = " << (c.ell_max == 0 ? std::string("auto") : std::to_string(c.ell_max)) << '\n'
       << "ell_max_cap = " << c.ell_max_cap << '\n'
       << "gradient_fraction = " << fmt(c.gradient_fraction) << '\n'
       << "grid = "
       << (c.n_theta == 0 && c.n_phi == 0
               ? std::string("auto")
               : std::to_string(c.n_theta) + "x" + std::to_string(c.n_phi))
       << '\n'
       << "n_replicas = " << c.n_replicas << '\n'
       << "seed = " << c.seed << '\n'
       << "replica = " << c.replica << '\n'
       << "method = " << c.method << '\n'
       << "resolutions = " << join(c.resolutions) << '\n'
       << "ell_max_rule = " << c.ell_max_rule << '\n'
       << "width = " << c.width << '\n'
       << "angles = " << c.angles << '\n'
       << "estimator = " << c.estimator << '\n'
       << "kernel_points = " << c.kernel_points << '\n';
    if (!c.output.empty()) {
        os << "output = " << c.output << '\n';
    }
    return os.str();
}

inline Activation make_activation(const ExperimentConfig& c) {
    try {
        if (c.activation == "heaviside") return Activation::heaviside();
        if (c.activation == "relu") return Activation::relu();
        if (c.activation == "leaky_relu") return Activation::leaky_relu(c.slope);
        if (c.activation == "gaussian") return Activation::gaussian(c.a);
        if (c.activation == "tanh") return Activation::tanh();
        if (c.activation == "logistic") return Activation::logistic();
    } catch (const std::domain_error& e) {
        throw config_error(c.activation == "gaussian" ? "a" : "slope", e.what());
    }
    throw config_error("activation", "unknown activation '" + c.activation + "'");
}

// Checks every field against the preconditions of the modules the experiment
// will call; nothing is computed before this passes.
inline void validate(const ExperimentConfig& c) {
    const Experiment e = c.experiment;
    make_activation(c);
    if (!(c.gamma_b >= 0.0 && c.gamma_b < 1.0)) {
        throw config_error("gamma_b", "must lie in [0, 1)");
    }
    const bool on_sphere2 = e == Experiment::simulate || e == Experiment::nodal ||
                            e == Experiment::fractal_scan;
    if (c.d < 2 || (on_sphere2 && c.d != 2)) {
        throw config_error("d", on_sphere2 ? "field experiments run on S^2 only" : "must be >= 2");
    }
    if (c.depths.empty()) {
        throw config_error("depths", "empty list");
    }
    for (int L : c.depths) {
        if (L < 1 || L > 1000) {
            throw config_error("depths", "each depth must lie in [1, 1000]");
        }
    }
    if ((e == Experiment::spectrum || e == Experiment::simulate) && c.depths.size() != 1) {
        throw config_error("depths", "this experiment takes exactly one depth");
    }
    for (double u : c.levels) {
        if (!std::isfinite(u)) {
            throw config_error("levels", "levels must be finite");
        }
    }
    if (c.levels.empty()) {
        throw config_error("levels", "empty list");
    }
    if (c.ell_max < 0 || c.ell_max > kMaxSynthesisBand) {
        throw config_error("ell_max", "must lie in [0, 10000]");
    }
    if (c.ell_max == 0 && e != Experiment::nodal) {
        throw config_error("ell_max", "auto is only available for nodal");
    }
    if (e == Experiment::variance_scan && c.ell_max < 64) {
        throw config_error("ell_max", "variance-scan needs ell_max >= 64");
    }
    if (c.ell_max_cap < 64 || c.ell_max_cap > kMaxSynthesisBand) {
        throw config_error("ell_max_cap", "must lie in [64, 10000]");
    }
    if (!(c.gradient_fraction > 0.0 && c.gradient_fraction <= 1.0)) {
        throw config_error("gradient_fraction", "must lie in (0, 1]");
    }
    const bool auto_grid = c.n_theta == 0 && c.n_phi == 0;
    if (auto_grid && e != Experiment::nodal) {
        throw config_error("grid", "auto is only available for nodal");
    }
    if (!auto_grid && (c.n_theta < 4 || c.n_phi < 8 || c.n_phi % 2 != 0)) {
        throw config_error("grid", "need n_theta >= 4 and even n_phi >= 8");
    }
    if ((e == Experiment::nodal || e == Experiment::fractal_scan) && c.n_replicas < 2) {
        throw config_error("n_replicas", "need at least two replicas");
    }
    if (e == Experiment::network_check && c.n_replicas < 100) {
        throw config_error("n_replicas", "network-check needs at least 100 replicas");
    }
    if (c.method != "conditioned" && c.method != "direct") {
        throw config_error("method", "expected conditioned or direct");
    }
    if (e == Experiment::fractal_scan) {
        if (c.resolutions.size() < 3) {
            throw config_error("resolutions", "need at least three resolutions");
        }
        for (std::size_t k = 0; k < c.resolutions.size(); ++k) {
            if (c.resolutions[k] < 4 || (k > 0 && c.resolutions[k] != 2 * c.resolutions[k - 1])) {
                throw config_error("resolutions", "each resolution must double the previous one");
            }
        }
        if (c.ell_max_rule == "resolution" && c.resolutions.back() / 2 > kMaxSynthesisBand) {
            throw config_error("resolutions", "largest resolution exceeds the band limit");
        }
    }
    if (c.ell_max_rule != "resolution" && c.ell_max_rule != "fixed") {
        throw config_error("ell_max_rule", "expected resolution or fixed");
    }
    if (c.width < 1) {
        throw config_error("width", "must be positive");
    }
    if (c.angles < 1) {
        throw config_error("angles", "must be positive");
    }
    if (c.estimator != "integrated" && c.estimator != "product") {
        throw config_error("estimator", "expected integrated or product");
    }
    if (c.kernel_points < 2) {
        throw config_error("kernel_points", "need at least two points");
    }
}

// One measured quantity with the parameters it was swept over. `theory` is
// absent where no closed form applies; the CSV column is then left empty.
struct ResultRow {
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> params;
    std::string quantity;
    double measured = 0.0;
    std::optional<double> std_error;
    std::optional<double> theory;

    std::optional<double> relative_deviation() const {
        if (!theory || *theory == 0.0) {
            return std::nullopt;
        }
        return std::abs(measured - *theory) / std::abs(*theory);
    }
};

struct Report {
    std::vector<ResultRow> rows;
    std::vector<std::string> warnings;
};

struct RunOptions {
    unsigned workers = 1;
};

// `# schema=1`, then a UTC timestamp unless deterministic.
inline void write_preamble(std::ostream& os, bool deterministic) {
    os << "# schema=1\n";
    if (!deterministic) {
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        char buf[64];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        os << "# generated=" << buf << '\n';
    }
}

// Columns: experiment, the parameter names of the first row, quantity,
// measured, std_error, theory, rel_deviation.
inline void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows,
                              bool deterministic) {
    write_preamble(os, deterministic);
    os << "experiment";
    if (!rows.empty()) {
        for (const auto& [name, value] : rows.front().params) {
            os << ',' << name;
        }
    }
    os << ",quantity,measured,std_error,theory,rel_deviation\n";
    auto opt = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
    for (const ResultRow& r : rows) {
        os << r.experiment;
        for (const auto& [name, value] : r.params) {
            os << ',' << value;
        }
        os << ',' << r.quantity << ',' << detail::fmt(r.measured) << ',' << opt(r.std_error) << ','
           << opt(r.theory) << ',' << opt(r.relative_deviation()) << '\n';
    }
}

// Smallest ℓ_max = 64·2^k ≤ cap whose spectrum carries `fraction` of the
// gradient variance d·κ_L'(1) (Σ C_ℓ n_ℓ/ω_d ℓ(ℓ+d−1)); the cap otherwise.
inline int gradient_band_limit(const Kernel& kernel, int d, double fraction, int cap) {
    const KernelProfile profile = make_profile(kernel.with_depth(1));
    if (profile.klass == KernelClass::fractal) {
        throw config_error("ell_max", "auto needs a Kac-Rice kernel");
    }
    const double target = d * std::pow(profile.kappa_prime_1, kernel.depth());
    const double omega = sphere_volume(d);
    int ell = 64;
    for (;; ell *= 2) {
        if (ell >= cap) {
            return cap;
        }
        const PowerSpectrum s = compute_spectrum(kernel, d, ell);
        double g = 0.0;
        for (int l = 0; l <= ell; ++l) {
            g += s.C[l] * static_cast<double>(n_harmonics(l, d)) / omega * l * (l + d - 1.0);
        }
        if (g >= fraction * target) {
            return ell;
        }
    }
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> base_params(const ExperimentConfig& c) {
    std::string act = c.activation;
    if (c.activation == "gaussian") {
        act += "(a=" + fmt(c.a) + ")";
    } else if (c.activation == "leaky_relu") {
        act += "(slope=" + fmt(c.slope) + ")";
    }
    return {{"activation", act}, {"gamma_b", fmt(c.gamma_b)}};
}

inline std::vector<int> sorted_depths(const ExperimentConfig& c) {
    std::vector<int> ds = c.depths;
    std::sort(ds.begin(), ds.end());
    ds.erase(std::unique(ds.begin(), ds.end()), ds.end());
    return ds;
}

inline std::vector<double> sorted_levels(const ExperimentConfig& c) {
    std::vector<double> us = c.levels;
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    return us;
}

}  // namespace detail

// κ_L on an equispaced u grid plus κ'(1), CRI and classification per depth.
inline Report run_kernel_experiment(const ExperimentConfig& c) {
    validate(c);
    const Activation sigma = make_activation(c);
    Report rep;
    for (int L : detail::sorted_depths(c)) {
        const KernelProfile p = make_profile(sigma, c.gamma_b, L);
        auto params = detail::base_params(c);
        params.emplace_back("L", std::to_string(L));
        params.emplace_back("class", to_string(p.klass));
        params.emplace_back("regime", p.regime_label ? to_string(p.regime_label->value) : "");
        auto row = [&](std::string q, std::string u, double v, std::optional<double> theory) {
            auto ps = params;
            ps.emplace_back("u", std::move(u));
            rep.rows.push_back({"kernel", std::move(ps), std::move(q), v, std::nullopt, theory});
        };
        if (p.klass == KernelClass::kac_rice) {
            row("kappa_prime_1", "", kappa_prime_at_one(p), std::pow(p.kappa_prime_1, L));
        }
        const double nominal = sigma.nominal_cri();
        const std::optional<double> beta_theory =
            p.klass == KernelClass::fractal ? std::optional<double>(std::pow(nominal, L))
                                            : std::optional<double>(std::min(2.0, nominal));
        row("cri_beta", "", p.cri_beta, beta_theory);
        row("cri_c1", "", p.c1, std::nullopt);
        for (int k = 0; k < c.kernel_points; ++k) {
            const double u = -1.0 + 2.0 * k / (c.kernel_points - 1);
            row("kappa", detail::fmt(u), p(u), std::nullopt);
        }
    }
    return rep;
}

inline PowerSpectrum spectrum_for(const ExperimentConfig& c, int depth, int ell_max) {
    return compute_spectrum(Kernel(make_activation(c), c.gamma_b, depth), c.d, ell_max);
}

// Per (L, u): Monte Carlo mean length and area with the closed-form targets.
inline Report run_nodal_experiment(const ExperimentConfig& c, const RunOptions& run = {}) {
    validate(c);
    const Activation sigma = make_activation(c);
    const std::vector<double> us = detail::sorted_levels(c);
    NodalOptions opt;
    opt.method = c.method == "direct" ? NodalMethod::direct : NodalMethod::conditioned;
    opt.workers = run.workers;
    const KernelProfile base = make_profile(sigma, c.gamma_b, 1);
    const bool kac_rice = base.klass == KernelClass::kac_rice;
    Report rep;
    if (!kac_rice) {
        rep.warnings.push_back("fractal-class kernel: length theory column omitted");
    }
    for (int L : detail::sorted_depths(c)) {
        const Kernel kernel(sigma, c.gamma_b, L);
        const int ell_max =
            c.ell_max != 0 ? c.ell_max
                           : gradient_band_limit(kernel, 2, c.gradient_fraction, c.ell_max_cap);
        const int nt = c.n_theta != 0 ? c.n_theta : std::max(256, 2 * ell_max);
        const int np = c.n_phi != 0 ? c.n_phi : 2 * nt;
        const SphericalGrid grid(nt, np);
        const PowerSpectrum spectrum = compute_spectrum(kernel, 2, ell_max);
        const auto reps = measure_replicas(spectrum, grid, us, c.n_replicas, c.seed, opt);
        const auto est = summarize(reps, us);
        for (std::size_t q = 0; q < us.size(); ++q) {
            auto params = detail::base_params(c);
            params.emplace_back("L", std::to_string(L));
            params.emplace_back("u", detail::fmt(us[q]));
            params.emplace_back("ell_max", std::to_string(ell_max));
            params.emplace_back("n_theta", std::to_string(nt));
            params.emplace_back("n_phi", std::to_string(np));
            params.emplace_back("n_replicas", std::to_string(c.n_replicas));
            std::optional<double> theory;
            if (kac_rice) {
                theory = theoretical_length(2, base.kappa_prime_1, L, us[q]);
            }
            rep.rows.push_back({"nodal", params, "length", est[q].length.mean,
                                est[q].length.std_error, theory});
            rep.rows.push_back({"nodal", params, "area", est[q].area.mean, est[q].area.std_error,
                                4.0 * std::numbers::pi * stats::normal_survival(us[q])});
        }
    }
    return rep;
}

// Length at each resolution and the fitted dimension per depth. The target
// dimension is 2 − β^L in the fractal class and 1 otherwise.
inline Report run_fractal_experiment(const ExperimentConfig& c, const RunOptions& run = {}) {
    validate(c);
    const Activation sigma = make_activation(c);
    NodalOptions opt;
    opt.method = c.method == "direct" ? NodalMethod::direct : NodalMethod::conditioned;
    opt.workers = run.workers;
    std::vector<SphericalGrid> grids;
    for (int nt : c.resolutions) {
        grids.emplace_back(nt, 2 * nt);
    }
    Report rep;
    for (int L : detail::sorted_depths(c)) {
        const KernelProfile p = make_profile(sigma, c.gamma_b, L);
        const std::optional<double> target =
            p.klass == KernelClass::fractal ? 2.0 - std::pow(sigma.nominal_cri(), L) : 1.0;
        for (double u : detail::sorted_levels(c)) {
            auto rule = [&](const SphericalGrid& g) {
                const int ell = c.ell_max_rule == "fixed" ? c.ell_max : g.n_theta / 2 - 1;
                return compute_spectrum(p.kernel, 2, ell);
            };
            const ScalingReport s =
                length_vs_resolution(rule, u, grids, c.n_replicas, c.seed, opt);
            auto params = detail::base_params(c);
            params.emplace_back("L", std::to_string(L));
            params.emplace_back("u", detail::fmt(u));
            for (const ScalingPoint& pt : s.points) {
                auto ps = params;
                ps.emplace_back("ell_max", std::to_string(pt.ell_max));
                ps.emplace_back("n_theta", std::to_string(pt.grid.n_theta));
                ps.emplace_back("n_phi", std::to_string(pt.grid.n_phi));
                std::optional<double> theory;
                if (p.klass == KernelClass::kac_rice) {
                    theory = theoretical_length(2, p.kappa_prime_1, L, u);
                }
                rep.rows.push_back({"fractal-scan", ps, "length", pt.length.mean,
                                    pt.length.std_error, theory});
            }
            auto ps = params;
            ps.emplace_back("ell_max", "");
            ps.emplace_back("n_theta", "");
            ps.emplace_back("n_phi", "");
            rep.rows.push_back({"fractal-scan", ps, "dimension", s.dimension, std::nullopt, target});
            rep.rows.push_back(
                {"fractal-scan", ps, "raw_dimension", s.raw_dimension, std::nullopt, std::nullopt});
            rep.rows.push_back(
                {"fractal-scan", ps, "fit_r_squared", s.r_squared, std::nullopt, std::nullopt});
        }
    }
    return rep;
}

// Explained variance of the depth-L spectrum up to ℓ_max; `past_peak` marks
// depths after the running maximum was reached.
inline Report run_variance_scan(const ExperimentConfig& c) {
    validate(c);
    Report rep;
    double peak = -1.0;
    bool past = false;
    for (int L : detail::sorted_depths(c)) {
        const double v = explained_variance(spectrum_for(c, L, c.ell_max));
        // Differences below 1e-12 are quadrature round-off.
        if (v < peak - 1e-12) {
            past = true;
        }
        peak = std::max(peak, v);
        auto params = detail::base_params(c);
        params.emplace_back("L", std::to_string(L));
        params.emplace_back("ell_max", std::to_string(c.ell_max));
        params.emplace_back("past_peak", past ? "1" : "0");
        rep.rows.push_back({"variance-scan", params, "explained_variance", v, std::nullopt,
                            std::nullopt});
    }
    return rep;
}

// Angles ψ_k = kπ/(n−1), k = 0 … n−1 (a single ψ = π/2 when n = 1), all
// paired with the same first point.
inline std::vector<PointPair> test_pairs(int d, int angles) {
    std::vector<PointPair> pairs;
    for (int k = 0; k < angles; ++k) {
        const double psi = angles == 1 ? 0.5 * std::numbers::pi
                                       : std::numbers::pi * k / (angles - 1);
        pairs.push_back(pair_at_angle(d, psi));
    }
    return pairs;
}

// Empirical covariance of width-n networks against κ_L, one row per (L, angle).
inline Report run_network_check(const ExperimentConfig& c, const RunOptions& run = {}) {
    validate(c);
    const Activation sigma = make_activation(c);
    const std::vector<int> depths = detail::sorted_depths(c);
    const NetworkArchitecture arch(c.d, std::vector<int>(depths.back(), c.width), sigma, c.gamma_b);
    EmpiricalKernelOptions opt;
    opt.estimator = c.estimator == "product" ? KernelEstimator::sampled_product
                                             : KernelEstimator::readout_integrated;
    opt.workers = run.workers;
    const auto pairs = test_pairs(c.d, c.angles);
    const auto by_depth = empirical_kernel_by_depth(arch, pairs, c.n_replicas, c.seed, opt);
    Report rep;
    for (int L : depths) {
        for (const KernelPoint& k : by_depth[static_cast<std::size_t>(L) - 1]) {
            auto params = detail::base_params(c);
            params.emplace_back("L", std::to_string(L));
            params.emplace_back("width", std::to_string(c.width));
            params.emplace_back("n_replicas", std::to_string(c.n_replicas));
            params.emplace_back("u", detail::fmt(k.u));
            rep.rows.push_back(
                {"network-check", params, "covariance", k.empirical_cov, k.std_error, k.kappa_L});
        }
    }
    return rep;
}

}  // namespace rnfgeo
