// Acceptance criteria: one PASS/FAIL line per criterion, each with its own
// wall-clock budget. `--only N` runs a single criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rnfgeo.hpp"

using namespace rnfgeo;
using std::numbers::pi;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
        }
        if (!ok || detail.size() < 600) {
            detail += (ok ? "" : "[fail] ") + what + "; ";
        }
    }
};

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

std::string num(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

const double kSparse = 1.0 + std::sqrt(2.0);
unsigned g_workers = 1;

Outcome rbf_slopes() {
    Outcome o;
    for (double a : {1.0, kSparse, 9.0}) {
        const double got = kappa_prime_at_one(make_profile(Activation::gaussian(a), 0.0));
        const double want = a * a / (2 * a + 1);
        o.check(std::abs(got - want) < 1e-8, "a=" + num(a) + " err=" + num(std::abs(got - want), 3));
    }
    return o;
}

Outcome depth_power_law() {
    Outcome o;
    double worst = 0.0;
    for (const Activation& a : {Activation::relu(), Activation::leaky_relu(0.2),
                                Activation::gaussian(1.0), Activation::gaussian(kSparse),
                                Activation::gaussian(9.0), Activation::tanh(), Activation::logistic()}) {
        const double k1 = kappa_prime_at_one(Kernel(a, 0.0, 1));
        for (int L = 1; L <= 10; ++L) {
            const double want = std::pow(k1, L);
            const double rel = std::abs(kappa_prime_at_one(Kernel(a, 0.0, L)) - want) / want;
            worst = std::max(worst, rel);
            if (rel >= 1e-6) {
                o.check(false, a.name() + " L=" + std::to_string(L) + " rel=" + num(rel, 3));
            }
        }
    }
    o.check(worst < 1e-6, "worst rel=" + num(worst, 3));
    return o;
}

Outcome cri_values() {
    Outcome o;
    const double h1 = make_profile(Activation::heaviside(), 0.0, 1).cri_beta;
    o.check(std::abs(h1 - 0.5) <= 0.02, "heaviside L=1 beta=" + num(h1));
    for (int L = 1; L <= 3; ++L) {
        const double b = make_profile(Activation::heaviside(), 0.0, L).cri_beta;
        const double want = std::pow(0.5, L);
        o.check(std::abs(b - want) <= 0.1 * want, "heaviside L=" + std::to_string(L) + " beta=" + num(b));
    }
    const double r = make_profile(Activation::relu(), 0.0, 1).cri_beta;
    o.check(std::abs(r - 1.5) <= 0.05, "relu beta=" + num(r));
    return o;
}

Outcome spectral_index() {
    Outcome o;
    for (const Activation& a : {Activation::heaviside(), Activation::relu()}) {
        const KernelProfile p = make_profile(a, 0.0);
        const auto e = estimate_spectral_index(compute_spectrum(p, 2, 512));
        o.check(std::abs(e.alpha / 2 - p.cri_beta) < 0.1,
                a.name() + " alpha/2=" + num(e.alpha / 2) + " beta=" + num(p.cri_beta));
    }
    return o;
}

Outcome kac_rice_desk() {
    Outcome o;
    const SphericalGrid grid(256, 512);
    const std::vector<double> us{0.0, 1.0};
    NodalOptions opt;
    opt.workers = g_workers;
    for (const Activation& a : {Activation::relu(), Activation::gaussian(1.0)}) {
        const double k1 = kappa_prime_at_one(make_profile(a, 0.0));
        for (int L : {1, 2, 4}) {
            const auto spectrum = compute_spectrum(Kernel(a, 0.0, L), 2, 64);
            const auto est = summarize(measure_replicas(spectrum, grid, us, 200, 1, opt), us);
            for (const auto& e : est) {
                const double want = theoretical_length(2, k1, L, e.u);
                const double rel = std::abs(e.length.mean - want) / want;
                o.check(rel < (e.u == 0.0 ? 0.05 : 0.10),
                        a.name() + " L=" + std::to_string(L) + " u=" + num(e.u) + " rel=" + num(rel, 3));
            }
        }
    }
    return o;
}

// Log-slope of mean length against L = 1 … 8 at u = 0.
double depth_slope(double a, bool auto_band, Outcome& o) {
    ExperimentConfig c;
    c.experiment = Experiment::nodal;
    c.activation = "gaussian";
    c.a = a;
    c.depths = {1, 2, 3, 4, 5, 6, 7, 8};
    c.levels = {0.0};
    if (auto_band) {
        c.ell_max = 0;
        c.n_theta = 0;
        c.n_phi = 0;
        c.n_replicas = 4;
    } else {
        c.ell_max = 64;
        c.n_theta = 256;
        c.n_phi = 512;
        c.n_replicas = 200;
    }
    const Report rep = run_nodal_experiment(c, {g_workers});
    std::vector<double> x;
    std::vector<double> y;
    for (const ResultRow& r : rep.rows) {
        if (r.quantity != "length") continue;
        for (const auto& [name, value] : r.params) {
            if (name == "L") x.push_back(std::stod(value));
        }
        if (!(r.measured > 0.0)) {
            o.check(false, "a=" + num(a) + " zero length");
            return 0.0;
        }
        y.push_back(std::log(r.measured));
    }
    return stats::fit_line(x, y).slope;
}

Outcome three_regimes() {
    Outcome o;
    for (double a : {1.0, 9.0}) {
        const double slope = depth_slope(a, a > 1.0, o);
        const double want = 0.5 * std::log(a * a / (2 * a + 1));
        o.check(std::abs(slope - want) <= 0.15 * std::abs(want),
                "a=" + num(a) + " slope=" + num(slope) + " want=" + num(want));
    }
    const double s = depth_slope(kSparse, false, o);
    o.check(std::abs(s) < 0.02, "a=1+sqrt2 slope=" + num(s));
    return o;
}

Outcome fractal_divergence() {
    Outcome o;
    ExperimentConfig c;
    c.experiment = Experiment::fractal_scan;
    c.activation = "heaviside";
    c.depths = {1};
    c.levels = {0.0};
    c.resolutions = {64, 128, 256, 512};
    c.ell_max_rule = "resolution";
    c.n_replicas = 50;
    const Report h = run_fractal_experiment(c, {g_workers});
    std::vector<double> len;
    for (const ResultRow& r : h.rows) {
        if (r.quantity == "length") len.push_back(r.measured);
        if (r.quantity == "raw_dimension") {
            o.check(std::abs(r.measured - 1.5) <= 0.15, "heaviside D=" + num(r.measured));
        }
    }
    for (std::size_t k = 1; k < len.size(); ++k) {
        o.check(len[k] > len[k - 1], "heaviside length " + num(len[k - 1]) + " -> " + num(len[k]));
    }
    c.activation = "relu";
    c.ell_max_rule = "fixed";
    c.ell_max = 64;
    const Report r = run_fractal_experiment(c, {g_workers});
    std::vector<double> rl;
    for (const ResultRow& row : r.rows) {
        if (row.quantity == "length") rl.push_back(row.measured);
    }
    const double change = std::abs(rl.back() - rl[rl.size() - 2]) / rl[rl.size() - 2];
    o.check(change < 0.05, "relu last doubling change=" + num(change, 3));
    return o;
}

Outcome area_oracle() {
    Outcome o;
    const std::vector<double> us{0.0, 1.0};
    NodalOptions opt;
    opt.method = NodalMethod::direct;
    opt.workers = g_workers;
    for (const Activation& a : {Activation::relu(), Activation::gaussian(1.0), Activation::heaviside()}) {
        const auto raw = compute_spectrum(Kernel(a, 0.0, 2), 2, 64);
        std::vector<double> C = raw.C;
        const double v = explained_variance(raw);
        for (double& x : C) {
            x /= v;
        }
        const auto spectrum = make_spectrum(2, C);
        const auto est = summarize(measure_replicas(spectrum, SphericalGrid(128, 256), us, 300, 3, opt), us);
        for (const auto& e : est) {
            const double want = 4 * pi * stats::normal_survival(e.u);
            o.check(std::abs(e.area.mean - want) <= 3 * e.area.std_error,
                    a.name() + " u=" + num(e.u) + " area=" + num(e.area.mean) + " want=" + num(want) +
                        " se=" + num(e.area.std_error, 3));
        }
    }
    return o;
}

Outcome finite_width() {
    Outcome o;
    const auto pairs = test_pairs(2, 9);
    EmpiricalKernelOptions opt;
    opt.workers = g_workers;
    for (const Activation& a : {Activation::heaviside(), Activation::relu(), Activation::gaussian(1.0)}) {
        const NetworkArchitecture arch(2, {1000, 1000, 1000, 1000}, a, 0.0);
        const auto by_depth = empirical_kernel_by_depth(arch, pairs, 2000, 1, opt);
        for (int L : {1, 2, 4}) {
            double sup = 0.0;
            for (const KernelPoint& k : by_depth[static_cast<std::size_t>(L) - 1]) {
                sup = std::max(sup, std::abs(k.empirical_cov - k.kappa_L));
            }
            o.check(sup < 0.05, a.name() + " L=" + std::to_string(L) + " sup=" + num(sup, 3));
        }
    }
    return o;
}

Outcome special_functions() {
    Outcome o;
    double worst = 0.0;
    for (int d : {2, 3, 5}) {
        for (double th : {0.05, 0.2, 0.7, 1.0, 1.2, 1.5}) {
            for (int l = 0; l <= 50; ++l) {
                worst = std::max(worst, std::abs(gegenbauer_integral(l, d, th) -
                                                 gegenbauer_eval(l, d, std::cos(th))));
            }
        }
    }
    o.check(worst < 1e-8, "recurrence vs integral " + num(worst, 3));
    double ortho = 0.0;
    for (int d : {2, 3, 5}) {
        const SphereQuadrature q = sphere_quadrature(512, d);
        std::vector<std::vector<double>> g;
        for (double t : q.t) {
            g.push_back(gegenbauer_all(50, d, t));
        }
        for (int l = 0; l <= 50; ++l) {
            for (int m = 0; m < l; ++m) {
                double s = 0.0;
                for (std::size_t k = 0; k < q.t.size(); ++k) {
                    s += q.w[k] * g[k][l] * g[k][m];
                }
                ortho = std::max(ortho, std::abs(s));
            }
        }
    }
    o.check(ortho < 1e-10, "orthogonality " + num(ortho, 3));
    auto sup_error = [](const Kernel& k) {
        const auto s = compute_spectrum(k, 2, 128);
        double e = 0.0;
        for (int i = 0; i <= 4000; ++i) {
            const double t = -1.0 + i / 2000.0;
            e = std::max(e, std::abs(reconstruct(s, t) - k(t)));
        }
        return e;
    };
    for (const Activation& a : {Activation::gaussian(1.0), Activation::relu(), Activation::leaky_relu(0.2),
                                Activation::tanh(), Activation::logistic()}) {
        const double e = sup_error(Kernel(a, 0.0));
        o.check(e < 1e-4, a.name() + " round trip " + num(e, 3));
    }
    const double h = sup_error(Kernel(Activation::heaviside(), 0.0));
    o.check(h < 1e-2, "heaviside round trip " + num(h, 3));
    return o;
}

Outcome variance_scan() {
    Outcome o;
    ExperimentConfig c;
    c.experiment = Experiment::variance_scan;
    c.activation = "gaussian";
    c.a = 9;
    c.ell_max = 256;
    c.depths.clear();
    for (int L = 1; L <= 60; ++L) {
        c.depths.push_back(L);
    }
    const Report rep = run_variance_scan(c);
    std::vector<double> v;
    for (const ResultRow& r : rep.rows) {
        v.push_back(r.measured);
    }
    const auto peak = std::max_element(v.begin(), v.end()) - v.begin();
    bool monotone = true;
    for (auto k = peak + 1; k < static_cast<std::ptrdiff_t>(v.size()); ++k) {
        monotone = monotone && v[k] <= v[k - 1] + 1e-12;
    }
    o.check(monotone, "non-increasing after peak at L=" + std::to_string(peak + 1));
    const auto below = std::find_if(v.begin(), v.end(), [](double x) { return x < 0.99; });
    o.check(below != v.end(), below == v.end() ? "never below 0.99"
                                               : "below 0.99 from L=" + std::to_string(below - v.begin() + 1) +
                                                     " final=" + num(v.back()));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
    app.add_option("--workers", g_workers, "worker threads")->check(CLI::PositiveNumber);
    g_workers = default_workers();
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "rbf kappa'(1) closed form", 1, rbf_slopes},
        {2, "depth power law of kappa'(1)", 1, depth_power_law},
        {3, "covariance regularity index", 5, cri_values},
        {4, "spectral index vs regularity index", 30, spectral_index},
        {5, "mean nodal length vs Kac-Rice", 600, kac_rice_desk},
        {6, "three depth regimes", 900, three_regimes},
        {7, "fractal divergence and plateau", 1200, fractal_divergence},
        {8, "excursion area oracle", 300, area_oracle},
        {9, "finite-width convergence", 600, finite_width},
        {10, "special functions", 60, special_functions},
        {11, "explained variance scan", 120, variance_scan},
    };
    int failed = 0;
    for (const Criterion& c : all) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("%s %2d %s (%.2f s / %.0f s%s) %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    secs, c.budget_s, in_time ? "" : ", over budget", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
