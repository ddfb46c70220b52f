// rnfgeo <subcommand> --config <path> [--out <path>] [--seed N] [--workers N] [--deterministic]

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "rnfgeo.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

struct CommandLine {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned workers = rnfgeo::default_workers();
    bool deterministic = false;
};

rnfgeo::ExperimentConfig load(const std::string& name, const CommandLine& cl) {
    std::ifstream in(cl.config_path);
    if (!in) {
        throw rnfgeo::config_error("config", "cannot read '" + cl.config_path + "'");
    }
    std::stringstream text;
    text << in.rdbuf();
    std::vector<std::string> keys;
    rnfgeo::ExperimentConfig c = rnfgeo::parse_config(text.str(), &keys);
    const bool names_experiment = std::find(keys.begin(), keys.end(), "experiment") != keys.end();
    const auto e = rnfgeo::experiment_from_string(name);
    if (names_experiment && c.experiment != *e) {
        throw rnfgeo::config_error("experiment", "config is for '" + rnfgeo::to_string(c.experiment) +
                                                     "', not '" + name + "'");
    }
    c.experiment = *e;
    if (cl.seed) {
        c.seed = *cl.seed;
    }
    if (!cl.out.empty()) {
        c.output = cl.out;
    }
    rnfgeo::validate(c);
    return c;
}

void emit(const rnfgeo::ExperimentConfig& c, const CommandLine& cl) {
    using namespace rnfgeo;
    std::ofstream file;
    if (!c.output.empty()) {
        file.open(c.output);
        if (!file) {
            throw config_error("output", "cannot write '" + c.output + "'");
        }
    }
    std::ostream& os = c.output.empty() ? std::cout : file;
    const RunOptions run{cl.workers};
    Report rep;
    switch (c.experiment) {
        case Experiment::spectrum: {
            write_preamble(os, cl.deterministic);
            write_spectrum_csv(os, spectrum_for(c, c.depths.front(), c.ell_max));
            return;
        }
        case Experiment::simulate: {
            const PowerSpectrum s = spectrum_for(c, c.depths.front(), c.ell_max);
            const FieldRealization f = synthesize(sample_coefficients(s, c.seed, c.replica),
                                                  SphericalGrid(c.n_theta, c.n_phi), cl.workers);
            write_preamble(os, cl.deterministic);
            write_field_csv(os, f);
            return;
        }
        case Experiment::kernel: rep = run_kernel_experiment(c); break;
        case Experiment::nodal: rep = run_nodal_experiment(c, run); break;
        case Experiment::fractal_scan: rep = run_fractal_experiment(c, run); break;
        case Experiment::variance_scan: rep = run_variance_scan(c); break;
        case Experiment::network_check: rep = run_network_check(c, run); break;
    }
    for (const std::string& w : rep.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    write_results_csv(os, rep.rows, cl.deterministic);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random neural fields on the sphere: kernels, spectra, fields and level sets"};
    app.require_subcommand(1);
    CommandLine cl;
    for (const char* name : {"kernel", "spectrum", "simulate", "nodal", "fractal-scan",
                             "variance-scan", "network-check"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", cl.config_path, "experiment config (key = value)")->required();
        sub->add_option("--out", cl.out, "output CSV (default: stdout or config `output`)");
        sub->add_option("--seed", cl.seed, "override the config seed");
        sub->add_option("--workers", cl.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--deterministic", cl.deterministic, "omit the timestamp line");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        emit(load(name, cl), cl);
    } catch (const rnfgeo::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const rnfgeo::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericExit;
    } catch (const rnfgeo::classification_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericExit;
    } catch (const std::range_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
