#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "rnfgeo/geometry.hpp"

using namespace rnfgeo;
using std::numbers::pi;

namespace {

FieldRealization cos_theta_field(const SphericalGrid& g) {
    auto c = HarmonicCoefficients::zeros(1);
    c.at(1, 1) = std::sqrt(4 * pi / 3);
    return synthesize(c, g);
}

PowerSpectrum spectrum_of(const Activation& a, int L, int ell_max) {
    return compute_spectrum(Kernel(a, 0.0, L), 2, ell_max);
}

double upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

}  // namespace

TEST(LevelSet, ConstantField) {
    FieldRealization f{SphericalGrid(16, 32), std::vector<double>(16 * 32, 0.25)};
    const auto below = extract_level_set(f, 0.5);
    EXPECT_EQ(below.total_length, 0.0);
    EXPECT_EQ(below.excursion_area, 0.0);
    const auto above = extract_level_set(f, 0.0);
    EXPECT_EQ(above.total_length, 0.0);
    EXPECT_NEAR(above.excursion_area, 4 * pi, 1e-12);
    EXPECT_THROW(extract_level_set(f, std::nan("")), std::domain_error);
}

TEST(LevelSet, CosThetaCircles) {
    const SphericalGrid g(256, 512);
    const auto f = cos_theta_field(g);
    const auto eq = extract_level_set(f, 0.0);
    EXPECT_NEAR(eq.total_length, 2 * pi, 0.01 * 2 * pi);
    EXPECT_NEAR(eq.excursion_area, 2 * pi, 0.01 * 2 * pi);
    const auto cap = extract_level_set(f, 0.5);
    EXPECT_NEAR(cap.total_length, pi * std::sqrt(3.0), 0.01 * pi * std::sqrt(3.0));
    EXPECT_NEAR(cap.excursion_area, pi, 0.01 * pi);
    EXPECT_GT(cap.n_segments, 0u);
}

TEST(LevelSet, RefinementConverges) {
    double prev = 1e300;
    const double want = 2 * pi * std::sqrt(1 - 0.09);
    for (int nt : {16, 32, 64, 128, 256}) {
        const double err = std::abs(extract_level_set(cos_theta_field(SphericalGrid(nt, 2 * nt)), 0.3)
                                        .total_length -
                                    want);
        EXPECT_LT(err, prev) << nt;
        prev = err;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(LevelSet, NegationSymmetry) {
    const auto c = sample_coefficients(spectrum_of(Activation::gaussian(1.0), 1, 48), 4, 0);
    const auto f = synthesize(c, SphericalGrid(96, 192));
    FieldRealization neg = f;
    for (double& v : neg.values) {
        v = -v;
    }
    for (double u : {-0.8, 0.0, 0.37}) {
        const auto a = extract_level_set(f, u);
        const auto b = extract_level_set(neg, -u);
        EXPECT_NEAR(a.total_length, b.total_length, 1e-12 * a.total_length) << u;
        EXPECT_NEAR(a.excursion_area + b.excursion_area, 4 * pi, 1e-11) << u;
    }
}

TEST(LevelSet, RotationInPhi) {
    const auto c = sample_coefficients(spectrum_of(Activation::relu(), 1, 48), 9, 1);
    const SphericalGrid g(96, 192);
    const auto f = synthesize(c, g);
    FieldRealization shifted = f;
    for (int i = 0; i < g.n_theta; ++i) {
        for (int j = 0; j < g.n_phi; ++j) {
            shifted.at(i, j) = f.at(i, (j + 37) % g.n_phi);
        }
    }
    for (double u : {-0.5, 0.1}) {
        EXPECT_NEAR(extract_level_set(f, u).total_length, extract_level_set(shifted, u).total_length,
                    1e-12 * extract_level_set(f, u).total_length);
    }
}

TEST(LevelSet, ManyLevelsMatchSingle) {
    const auto c = sample_coefficients(spectrum_of(Activation::gaussian(1.0), 2, 32), 2, 3);
    const auto f = synthesize(c, SphericalGrid(64, 128));
    const std::vector<double> levels{-1.0, -0.2, 0.0, 0.4, 1.3};
    const auto many = level_lengths(f, levels);
    for (std::size_t k = 0; k < levels.size(); ++k) {
        EXPECT_NEAR(many[k], extract_level_set(f, levels[k]).total_length, 1e-12 * (1 + many[k]));
    }
    const std::vector<double> unsorted{0.5, 0.1};
    EXPECT_THROW(level_lengths(f, unsorted), std::domain_error);
}

TEST(Nodal, ZeroSpectrum) {
    const auto s = make_spectrum(2, std::vector<double>(17, 0.0));
    const double us[1] = {0.0};
    const auto r = measure_replica(s, SphericalGrid(32, 64), us, 1, 0, {});
    EXPECT_EQ(r.length[0], 0.0);
    EXPECT_EQ(r.area[0], 0.0);
}

TEST(Nodal, TheoreticalLength) {
    EXPECT_NEAR(theoretical_length(2, 1.0, 1, 0.0), 2 * pi, 1e-14);
    EXPECT_NEAR(theoretical_length(2, 81.0 / 19.0, 2, 1.0), 2 * pi * 81.0 / 19.0 * std::exp(-0.5),
                1e-12);
    EXPECT_NEAR(theoretical_length(2, 81.0 / 19.0, 2, 1.0), 16.25, 0.01);
    EXPECT_NEAR(theoretical_length(2, 0.3, 0, 0.0), 2 * pi, 1e-14);
    EXPECT_THROW(theoretical_length(2, 0.0, 1, 0.0), std::domain_error);
}

TEST(Nodal, SmoothKernelLength) {
    const SphericalGrid g(128, 256);
    for (int L : {1, 4}) {
        const auto s = spectrum_of(Activation::gaussian(1.0), L, 64);
        const auto e = mean_nodal_length(s, g, 0.0, 24, 5);
        const double want = theoretical_length(2, 1.0 / 3.0, L, 0.0);
        EXPECT_LT(std::abs(e.mean - want), 0.1 * want) << "L=" << L;
    }
}

TEST(Nodal, ReluSingleLayerLength) {
    const auto s = spectrum_of(Activation::relu(), 1, 256);
    const auto e = mean_nodal_length(s, SphericalGrid(512, 1024), 0.0, 40, 3);
    EXPECT_LT(std::abs(e.mean - 2 * pi), 0.05 * 2 * pi);
}

TEST(Nodal, ConditionedAgreesWithDirect) {
    const auto s = spectrum_of(Activation::gaussian(1.0), 1, 64);
    const SphericalGrid g(128, 256);
    const std::vector<double> us{0.0, 1.0};
    NodalOptions direct;
    direct.method = NodalMethod::direct;
    const auto a = summarize(measure_replicas(s, g, us, 80, 12, direct), us);
    const auto b = summarize(measure_replicas(s, g, us, 80, 12, {}), us);
    for (std::size_t q = 0; q < us.size(); ++q) {
        const double se = std::hypot(a[q].length.std_error, b[q].length.std_error);
        EXPECT_LT(std::abs(a[q].length.mean - b[q].length.mean), 3 * se) << us[q];
        EXPECT_LT(b[q].length.std_error, a[q].length.std_error);
    }
}

TEST(Nodal, ExcursionAreaOracle) {
    const auto raw = spectrum_of(Activation::gaussian(1.0), 1, 64);
    std::vector<double> C = raw.C;
    const double v = explained_variance(raw);
    for (double& c : C) {
        c /= v;
    }
    const auto s = make_spectrum(2, C);
    const std::vector<double> us{0.0, 0.5, 1.0};
    NodalOptions direct;
    direct.method = NodalMethod::direct;
    const auto est = summarize(measure_replicas(s, SphericalGrid(64, 128), us, 200, 6, direct), us);
    for (const auto& e : est) {
        EXPECT_LT(std::abs(e.area.mean - 4 * pi * upper_tail(e.u)), 3 * e.area.std_error) << e.u;
    }
}

TEST(Scaling, FixedBandIsSmooth) {
    const auto s = spectrum_of(Activation::relu(), 1, 32);
    std::vector<SphericalGrid> grids{{64, 128}, {128, 256}, {256, 512}, {512, 1024}};
    const auto r = length_vs_resolution([&](const SphericalGrid&) { return s; }, 0.0, grids, 4, 2);
    EXPECT_NEAR(r.dimension, 1.0, 0.05);
    EXPECT_NEAR(r.raw_dimension, 1.0, 0.05);
    EXPECT_EQ(r.points.size(), 4u);
    EXPECT_EQ(r.replicas.size(), 16u);
}

TEST(Scaling, ConfigErrors) {
    const auto s = spectrum_of(Activation::relu(), 1, 16);
    auto same = [&](const SphericalGrid&) { return s; };
    std::vector<SphericalGrid> two{{32, 64}, {64, 128}};
    std::vector<SphericalGrid> gap{{32, 64}, {64, 128}, {256, 512}};
    std::vector<SphericalGrid> ok{{32, 64}, {64, 128}, {128, 256}};
    EXPECT_THROW(length_vs_resolution(same, 0.0, two, 4, 1), config_error);
    EXPECT_THROW(length_vs_resolution(same, 0.0, gap, 4, 1), config_error);
    EXPECT_THROW(length_vs_resolution(same, 0.0, ok, 1, 1), config_error);
    try {
        length_vs_resolution(same, 0.0, gap, 4, 1);
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("resolutions"), std::string::npos);
    }
}

TEST(Geometry, CsvFormat) {
    std::ostringstream os;
    write_geometry_header(os);
    const std::vector<double> us{0.0};
    std::vector<ReplicaMeasurement> reps{{7, {1.5}, {2.0}}};
    write_geometry_rows(os, SphericalGrid(8, 16), 3, us, reps);
    EXPECT_EQ(os.str(),
              "resolution_ntheta,resolution_nphi,ell_max,u,replica,length,area\n"
              "8,16,3,0,7,1.5,2\n");
}
