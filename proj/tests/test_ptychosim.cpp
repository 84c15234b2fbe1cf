#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "support.hpp"
#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/scanplan.hpp"

using namespace xpt;
using namespace xpt::sim;

namespace {

constexpr double kLambda = 0.1409;
constexpr double kDz = 89.6;

std::vector<ComplexField2D> random_slices(Rng& rng, std::size_t count, std::size_t n, double pitch, double spread) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<ComplexField2D> out;
    for (std::size_t l = 0; l < count; ++l) {
        ComplexField2D s(n, n, pitch);
        for (auto& v : s.data()) v = std::polar(1.0 + 0.2 * g(rng), spread * g(rng));
        out.push_back(std::move(s));
    }
    return out;
}

optics::ProbeSet random_probe(Rng& rng, std::size_t modes, std::size_t n, double pitch) {
    optics::ProbeSet p;
    double total = 0.0;
    for (std::size_t m = 0; m < modes; ++m) {
        auto f = test::random_field(rng, n, n, pitch);
        const double norm = l2_norm(f);
        for (auto& v : f.data()) v /= norm;
        p.modes.push_back(f);
        p.mode_powers.push_back(1.0 / static_cast<double>(m + 1));
        total += p.mode_powers.back();
    }
    for (auto& w : p.mode_powers) w /= total;
    return p;
}

double rel_err(const ComplexField2D& a, const ComplexField2D& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

double rel_err(const RealField2D& a, const RealField2D& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

scan::ScanPlan single_position_plan(std::size_t plane, int window, double pitch) {
    scan::ScanPlan plan;
    plan.angles_deg = {0.0};
    const double c = static_cast<double>(plane / 2) * pitch;
    plan.positions = {{{c, c}}};
    plan.window_px = window;
    plan.pixel_pitch_nm = pitch;
    plan.plane_rows = plane;
    plan.plane_cols = plane;
    plan.footprint_nm = 2.0 * pitch;
    return plan;
}

}  // namespace

TEST_CASE("empty object is free-space propagation") {
    Rng rng(1);
    const auto probe = test::random_field(rng, 16, 16, 14.0);
    const std::vector<ComplexField2D> ones(4, ComplexField2D(16, 16, 14.0, cdouble{1.0, 0.0}));
    const auto w = forward_exit_wave(probe, ones, kDz, kLambda);
    CHECK(rel_err(w.exit, optics::propagate(probe, 3.0 * kDz, kLambda)) < 1e-12);
    REQUIRE(w.incident.size() == 4);
    CHECK(w.incident[0] == probe);
}

TEST_CASE("single slice is the thin-object product") {
    Rng rng(2);
    const auto probe = test::random_field(rng, 8, 8, 14.0);
    const auto slices = random_slices(rng, 1, 8, 14.0, 0.5);
    const auto w = forward_exit_wave(probe, slices, kDz, kLambda);
    for (std::size_t i = 0; i < probe.size(); ++i) CHECK(w.exit[i] == probe[i] * slices[0][i]);
}

TEST_CASE("multi-slice exit waves and intensities match the direct-DFT oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(derive_seed(3, {seed}));
        const auto probe = random_probe(rng, 3, 8, 14.0);
        const auto slices = random_slices(rng, 5, 8, 14.0, 0.7);
        const auto w = forward_exit_wave(probe.modes[0], slices, kDz, kLambda);
        CHECK(rel_err(w.exit, oracle::exit_wave(probe.modes[0], slices, kDz, kLambda)) < 1e-10);
        const auto got = forward_intensity(probe, slices, kDz, kLambda);
        CHECK(rel_err(got, oracle::intensity(probe, slices, kDz, kLambda)) < 1e-10);
    }
}

TEST_CASE("single mode intensity is |F psi|^2") {
    Rng rng(4);
    auto probe = random_probe(rng, 1, 8, 14.0);
    const auto slices = random_slices(rng, 3, 8, 14.0, 0.3);
    auto far = forward_exit_wave(probe.modes[0], slices, kDz, kLambda).exit;
    fft::forward2d(far);
    const auto got = forward_intensity(probe, slices, kDz, kLambda);
    for (std::size_t i = 0; i < far.size(); ++i) CHECK(got[i] == doctest::Approx(std::norm(far[i])).epsilon(1e-13));
}

TEST_CASE("intensity is linear in mode powers") {
    Rng rng(5);
    auto probe = random_probe(rng, 2, 8, 14.0);
    probe.mode_powers = {0.7, 0.3};
    const auto slices = random_slices(rng, 2, 8, 14.0, 0.3);
    auto single = [&](std::size_t m) {
        optics::ProbeSet p;
        p.modes = {probe.modes[m]};
        p.mode_powers = {1.0};
        return forward_intensity(p, slices, kDz, kLambda);
    };
    const auto i1 = single(0);
    const auto i2 = single(1);
    const auto mixed = forward_intensity(probe, slices, kDz, kLambda);
    for (std::size_t i = 0; i < mixed.size(); ++i)
        CHECK(mixed[i] == doctest::Approx(0.7 * i1[i] + 0.3 * i2[i]).epsilon(1e-12));
}

TEST_CASE("total intensity equals the weighted exit-wave energy") {
    Rng rng(6);
    const auto probe = random_probe(rng, 3, 16, 14.0);
    const auto slices = random_slices(rng, 4, 16, 14.0, 0.5);
    double expected = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
        const auto w = forward_exit_wave(probe.modes[m], slices, kDz, kLambda);
        expected += probe.mode_powers[m] * std::pow(l2_norm(w.exit), 2);
    }
    const auto intensity = forward_intensity(probe, slices, kDz, kLambda);
    double total = 0.0;
    for (double v : intensity.data()) total += v;
    CHECK(std::abs(total - expected) < 1e-10 * expected);
}

TEST_CASE("intensity is invariant to a global phase on the slices") {
    Rng rng(7);
    const auto probe = random_probe(rng, 2, 8, 14.0);
    auto slices = random_slices(rng, 3, 8, 14.0, 0.5);
    const auto before = forward_intensity(probe, slices, kDz, kLambda);
    for (auto& s : slices)
        for (auto& v : s.data()) v *= std::polar(1.0, 1.234);
    CHECK(rel_err(forward_intensity(probe, slices, kDz, kLambda), before) < 1e-12);
}

TEST_CASE("grid mismatch is rejected") {
    Rng rng(8);
    const auto probe = test::random_field(rng, 8, 8, 14.0);
    const auto slices = random_slices(rng, 2, 6, 14.0, 0.1);
    CHECK_THROWS_AS(forward_exit_wave(probe, slices, kDz, kLambda), UsageError);
}

TEST_CASE("empty phantom gives the free-space probe pattern everywhere") {
    const Volume empty({8, 24, 24}, {}, VolumeKind::kPhase);
    const auto probe = optics::make_probe(3, 40.0, {16, 16, 14.0}, 0.5, 2);
    const auto plan = scan::make_scan_plan(scan::make_angles(3, 30.0), 24, 24, 14.0, 80.0, 0.5, 16);
    RunConfig cfg;
    const auto stack = simulate_stack(empty, probe, plan, cfg);
    RealField2D expected(16, 16, 14.0);
    for (std::size_t m = 0; m < 3; ++m) {
        auto far = probe.modes[m];
        fft::forward2d(far);
        for (std::size_t i = 0; i < far.size(); ++i) expected[i] += probe.mode_powers[m] * std::norm(far[i]);
    }
    for (std::size_t n = 0; n < stack.angle_count(); ++n)
        for (std::size_t j = 0; j < stack.position_count(n); ++j) {
            const auto p = stack.pattern(n, j);
            for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(std::abs(p[i] - expected[i]) < 1e-12);
        }
}

TEST_CASE("noiseless simulation is deterministic and round-trips through disk") {
    Rng rng(9);
    Volume phase = test::random_volume(rng, {8, 20, 20});
    for (double& v : phase.data()) v = 0.01 * std::abs(v);
    const auto probe = optics::make_probe(2, 40.0, {16, 16, 14.0}, 0.5, 2);
    const auto plan = scan::make_scan_plan(scan::make_angles(3, 45.0), 20, 20, 14.0, 80.0, 0.5, 16);
    RunConfig cfg;
    const auto a = simulate_stack(phase, probe, plan, cfg);
    const auto b = simulate_stack(phase, probe, plan, cfg);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    a.validate_against(plan);

    test::TempDir dir("stack");
    write_stack(a, dir / "s.xptv", 14.0);
    const auto back = read_stack(dir / "s.xptv");
    CHECK(back.positions_per_angle() == a.positions_per_angle());
    for (std::size_t i = 0; i < a.data().size(); ++i)
        REQUIRE(back.data()[i] == static_cast<double>(static_cast<float>(a.data()[i])));

    auto other = plan;
    other.angles_deg.push_back(50.0);
    other.positions.push_back(other.positions.back());
    CHECK_THROWS_AS(a.validate_against(other), DataError);
}

TEST_CASE("Poisson exposures average to the noiseless pattern within 5 sigma") {
    Rng rng(10);
    Volume phase = test::random_volume(rng, {4, 16, 16});
    for (double& v : phase.data()) v = 0.02 * std::abs(v);
    const auto probe = optics::make_probe(1, 30.0, {16, 16, 14.0}, 0.5, 2);
    const auto plan = single_position_plan(16, 16, 14.0);
    RunConfig cfg;
    cfg.slice_count = 2;
    const auto clean = simulate_stack(phase, probe, plan, cfg);
    const auto ideal = clean.pattern(0, 0);
    double total = 0.0;
    for (double v : ideal) total += v;
    cfg.photon_count = 1e6;
    const double scale = cfg.photon_count / total;
    const int exposures = 100;
    std::vector<double> mean(ideal.size(), 0.0);
    for (int e = 0; e < exposures; ++e) {
        cfg.seed = derive_seed(99, {static_cast<std::uint64_t>(e)});
        const auto noisy = simulate_stack(phase, probe, plan, cfg);
        const auto p = noisy.pattern(0, 0);
        for (std::size_t i = 0; i < p.size(); ++i) mean[i] += p[i] * scale / exposures;
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double lambda = ideal[i] * scale;
        const double sigma = std::sqrt(lambda / exposures);
        CHECK(std::abs(mean[i] - lambda) <= 5.0 * sigma + 1e-12);
    }
}

TEST_CASE("z-invariant phantom at angle 0 matches the thin-object simulation") {
    const std::size_t nz = 20;
    Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 0.005);
    Volume phase({nz, 16, 16}, {}, VolumeKind::kPhase);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
            const double v = u(rng);
            for (std::size_t z = 0; z < nz; ++z) phase(z, y, x) = v;
        }
    const auto probe = optics::make_probe(2, 30.0, {16, 16, 14.0}, 0.5, 4);
    const auto plan = single_position_plan(16, 16, 14.0);
    RunConfig thick;
    thick.slice_count = 5;
    RunConfig thin = thick;
    thin.slice_count = 1;
    const auto a = simulate_stack(phase, probe, plan, thick).pattern(0, 0);
    const auto b = simulate_stack(phase, probe, plan, thin).pattern(0, 0);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, b[i]);
    }
    CHECK(num / den < 1e-3);
}

TEST_CASE("positions outside the plane are rejected") {
    const Volume phase({4, 16, 16}, {}, VolumeKind::kPhase);
    const auto probe = optics::make_probe(1, 30.0, {16, 16, 14.0}, 0.5, 2);
    auto plan = single_position_plan(16, 16, 14.0);
    plan.positions[0][0].x_nm = 1e4;
    CHECK_THROWS_AS(simulate_stack(phase, probe, plan, RunConfig{}), UsageError);
}
