#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "rnfgeo.hpp"

using namespace rnfgeo;
using std::numbers::pi;

namespace {

std::string field_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const config_error& e) {
        return e.field();
    }
    return "";
}

ExperimentConfig small_nodal() {
    ExperimentConfig c;
    c.experiment = Experiment::nodal;
    c.activation = "relu";
    c.depths = {2, 1};
    c.levels = {1.0, 0.0};
    c.ell_max = 32;
    c.n_theta = 64;
    c.n_phi = 128;
    c.n_replicas = 6;
    return c;
}

std::filesystem::path scratch_dir() {
    auto p = std::filesystem::temp_directory_path() / "rnfgeo_harness_test";
    std::filesystem::create_directories(p);
    return p;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RNFGEO_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesKeysCommentsAndLists) {
    std::vector<std::string> keys;
    const auto c = parse_config(
        "# header\n"
        "experiment = fractal-scan   # trailing\n"
        "\n"
        "activation=heaviside\n"
        "depths = 1, 2,3\n"
        "levels = -0.5, 0\n"
        "resolutions = 32,64,128\n"
        "grid = 64 x 128\n"
        "seed = 18446744073709551615\n",
        &keys);
    EXPECT_EQ(c.experiment, Experiment::fractal_scan);
    EXPECT_EQ(c.activation, "heaviside");
    EXPECT_EQ(c.depths, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(c.levels, (std::vector<double>{-0.5, 0.0}));
    EXPECT_EQ(c.resolutions, (std::vector<int>{32, 64, 128}));
    EXPECT_EQ(c.n_theta, 64);
    EXPECT_EQ(c.n_phi, 128);
    EXPECT_EQ(c.seed, 18446744073709551615ull);
    EXPECT_EQ(keys.size(), 7u);
    const auto a = parse_config("ell_max = auto\ngrid = auto\n");
    EXPECT_EQ(a.ell_max, 0);
    EXPECT_EQ(a.n_theta, 0);
    EXPECT_EQ(a.n_phi, 0);
}

TEST(Config, ErrorsNameTheField) {
    EXPECT_EQ(field_of([] { parse_config("bogus = 1\n"); }), "bogus");
    EXPECT_EQ(field_of([] { parse_config("seed = 1\nseed = 2\n"); }), "seed");
    EXPECT_EQ(field_of([] { parse_config("width = ten\n"); }), "width");
    EXPECT_EQ(field_of([] { parse_config("depths = 1,,2\n"); }), "depths");
    EXPECT_EQ(field_of([] { parse_config("grid = 64\n"); }), "grid");
    EXPECT_EQ(field_of([] { parse_config("experiment = everything\n"); }), "experiment");
    EXPECT_EQ(field_of([] { parse_config("a = 1\njust words\n"); }), "line 2");
    EXPECT_EQ(field_of([] { parse_config("gamma_b = 0.1x\n"); }), "gamma_b");
}

TEST(Config, RoundTrip) {
    for (const char* path : {"kernel.cfg", "spectrum.cfg", "simulate.cfg", "nodal.cfg",
                             "nodal_auto.cfg", "fractal_scan.cfg", "variance_scan.cfg",
                             "network_check.cfg"}) {
        const auto c = parse_config(read_file(std::filesystem::path(RNFGEO_CONFIG_DIR) / path));
        EXPECT_NO_THROW(validate(c)) << path;
        const std::string once = serialize_config(c);
        const auto back = parse_config(once);
        EXPECT_EQ(back, c) << path;
        EXPECT_EQ(serialize_config(back), once) << path;
    }
    ExperimentConfig odd;
    odd.levels = {0.1, -1.0 / 3.0};
    odd.gamma_b = 0.3;
    odd.output = "out.csv";
    EXPECT_EQ(parse_config(serialize_config(odd)), odd);
}

TEST(Config, Validation) {
    auto bad = [](auto mutate) {
        return field_of([&] {
            ExperimentConfig c = small_nodal();
            mutate(c);
            validate(c);
        });
    };
    EXPECT_EQ(bad([](ExperimentConfig&) {}), "");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.gamma_b = 1.0; }), "gamma_b");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.gamma_b = -0.1; }), "gamma_b");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.activation = "swish"; }), "activation");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.activation = "gaussian"; c.a = 0.0; }), "a");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.activation = "leaky_relu"; c.slope = 1.0; }), "slope");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.d = 3; }), "d");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.depths = {0}; }), "depths");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.depths = {}; }), "depths");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.levels = {INFINITY}; }), "levels");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.ell_max = 20000; }), "ell_max");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.n_phi = 127; }), "grid");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.n_replicas = 1; }), "n_replicas");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.method = "fast"; }), "method");
    EXPECT_EQ(bad([](ExperimentConfig& c) { c.gradient_fraction = 0.0; }), "gradient_fraction");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::fractal_scan;
                  c.resolutions = {64, 128, 512};
              }),
              "resolutions");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::spectrum;
                  c.depths = {1};
                  c.ell_max = 0;
              }),
              "ell_max");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::simulate;
                  c.depths = {1};
                  c.n_theta = 0;
                  c.n_phi = 0;
              }),
              "grid");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::network_check;
                  c.n_replicas = 50;
              }),
              "n_replicas");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::network_check;
                  c.n_replicas = 100;
                  c.estimator = "exact";
              }),
              "estimator");
    EXPECT_EQ(bad([](ExperimentConfig& c) {
                  c.experiment = Experiment::spectrum;
                  c.depths = {1, 2};
              }),
              "depths");
}

TEST(Results, RelativeDeviationAndEmptyColumns) {
    ResultRow r{"nodal", {{"L", "1"}}, "length", 6.0, 0.1, 2 * pi};
    EXPECT_NEAR(*r.relative_deviation(), std::abs(6.0 - 2 * pi) / (2 * pi), 1e-15);
    ResultRow bare{"nodal", {{"L", "1"}}, "length", 6.0, std::nullopt, std::nullopt};
    EXPECT_FALSE(bare.relative_deviation().has_value());
    std::ostringstream os;
    write_results_csv(os, {r, bare}, true);
    std::istringstream in(os.str());
    std::string schema, header, first, second;
    std::getline(in, schema);
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    EXPECT_EQ(schema, "# schema=1");
    EXPECT_EQ(header, "experiment,L,quantity,measured,std_error,theory,rel_deviation");
    EXPECT_EQ(second, "nodal,1,length,6,,,");
    EXPECT_EQ(first.substr(0, 17), "nodal,1,length,6,");
}

TEST(Results, TimestampOnlyWhenNotDeterministic) {
    std::ostringstream a;
    write_preamble(a, true);
    EXPECT_EQ(a.str(), "# schema=1\n");
    std::ostringstream b;
    write_preamble(b, false);
    EXPECT_EQ(b.str().rfind("# schema=1\n# generated=", 0), 0u);
}

TEST(Runner, NodalRowsAndTheory) {
    const Report rep = run_nodal_experiment(small_nodal());
    ASSERT_EQ(rep.rows.size(), 8u);
    EXPECT_TRUE(rep.warnings.empty());
    const ResultRow& first = rep.rows.front();
    EXPECT_EQ(first.quantity, "length");
    EXPECT_NEAR(*first.theory, 2 * pi, 1e-12);
    EXPECT_EQ(rep.rows[1].quantity, "area");
    EXPECT_NEAR(*rep.rows[1].theory, 2 * pi, 1e-12);
    // Sorted by depth, then level.
    std::vector<std::string> order;
    for (const auto& r : rep.rows) {
        std::string key;
        for (const auto& [name, value] : r.params) {
            if (name == "L" || name == "u") key += value + "/";
        }
        order.push_back(key);
    }
    EXPECT_EQ(order[0], "1/0/");
    EXPECT_EQ(order[2], "1/1/");
    EXPECT_EQ(order[4], "2/0/");
}

TEST(Runner, FractalKernelHasNoLengthTheory) {
    ExperimentConfig c = small_nodal();
    c.activation = "heaviside";
    c.depths = {1};
    const Report rep = run_nodal_experiment(c);
    EXPECT_EQ(rep.warnings.size(), 1u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.theory.has_value(), r.quantity == "area");
    }
}

TEST(Runner, DeterministicOutput) {
    auto csv = [](unsigned workers) {
        std::ostringstream os;
        write_results_csv(os, run_nodal_experiment(small_nodal(), {workers}).rows, true);
        return os.str();
    };
    EXPECT_EQ(csv(1), csv(1));
    EXPECT_EQ(csv(1), csv(3));
}

TEST(Runner, KernelExperiment) {
    ExperimentConfig c;
    c.experiment = Experiment::kernel;
    c.activation = "gaussian";
    c.a = 9;
    c.depths = {1, 2};
    c.kernel_points = 5;
    const Report rep = run_kernel_experiment(c);
    ASSERT_EQ(rep.rows.size(), 2u * (3 + 5));
    EXPECT_EQ(rep.rows[0].quantity, "kappa_prime_1");
    EXPECT_LT(*rep.rows[0].relative_deviation(), 1e-8);
    EXPECT_NEAR(rep.rows[8].measured, std::pow(81.0 / 19.0, 2), 1e-6);
    EXPECT_EQ(rep.rows[1].quantity, "cri_beta");
    EXPECT_NEAR(rep.rows[1].measured, 2.0, 0.01);
}

TEST(Runner, VarianceScanAndNetwork) {
    ExperimentConfig v;
    v.experiment = Experiment::variance_scan;
    v.activation = "gaussian";
    v.a = 1;
    v.depths = {1, 4, 16};
    v.ell_max = 64;
    const Report rv = run_variance_scan(v);
    ASSERT_EQ(rv.rows.size(), 3u);
    EXPECT_GT(rv.rows[2].measured, rv.rows[0].measured);

    ExperimentConfig n;
    n.experiment = Experiment::network_check;
    n.depths = {1, 2};
    n.width = 100;
    n.angles = 3;
    n.n_replicas = 100;
    const Report rn = run_network_check(n);
    ASSERT_EQ(rn.rows.size(), 6u);
    for (const auto& r : rn.rows) {
        EXPECT_LT(std::abs(r.measured - *r.theory), 0.1);
    }
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch_dir();
    const std::string cfg = RNFGEO_CONFIG_DIR;
    EXPECT_EQ(run_cli("kernel --config " + cfg + "/kernel.cfg --deterministic"), 0);
    EXPECT_EQ(run_cli("nodal --config " + cfg + "/bad_gamma.cfg"), 2);
    EXPECT_EQ(run_cli("nodal --config " + cfg + "/does_not_exist.cfg"), 2);
    EXPECT_EQ(run_cli("spectrum --config " + cfg + "/kernel.cfg"), 2);
    EXPECT_EQ(run_cli("nodal"), 2);
    EXPECT_EQ(run_cli("kernel --config " + cfg + "/kernel.cfg --workers 0"), 2);
    write_file(dir / "huge_dim.cfg", "experiment = spectrum\nd = 2000\nell_max = 64\n");
    EXPECT_EQ(run_cli("spectrum --config " + (dir / "huge_dim.cfg").string()), 3);
}

TEST(Cli, DeterministicAcrossWorkers) {
    const auto dir = scratch_dir();
    write_file(dir / "small.cfg", serialize_config(small_nodal()));
    const std::string base = "nodal --config " + (dir / "small.cfg").string() + " --deterministic";
    ASSERT_EQ(run_cli(base + " --workers 1 --out " + (dir / "w1.csv").string()), 0);
    ASSERT_EQ(run_cli(base + " --workers 4 --out " + (dir / "w4.csv").string()), 0);
    const std::string a = read_file(dir / "w1.csv");
    EXPECT_EQ(a, read_file(dir / "w4.csv"));
    EXPECT_EQ(a.rfind("# schema=1\nexperiment,", 0), 0u);
    ASSERT_EQ(run_cli(base + " --seed 99 --out " + (dir / "s99.csv").string()), 0);
    EXPECT_NE(a, read_file(dir / "s99.csv"));

    ASSERT_EQ(run_cli("simulate --config " + std::string(RNFGEO_CONFIG_DIR) +
                      "/simulate.cfg --deterministic --out " + (dir / "field.csv").string()),
              0);
    const std::string field = read_file(dir / "field.csv");
    EXPECT_EQ(field.rfind("# schema=1\ni,j,theta,phi,value\n", 0), 0u);
}
