#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "xpt/error.hpp"
#include "xpt/metrics.hpp"

using namespace xpt;
using namespace xpt::metrics;

namespace {

Volume labels(Dims3 d, std::vector<double> values) { return Volume(d, {}, VolumeKind::kLabel, std::move(values)); }

std::vector<double> mixture(Rng& rng, std::size_t n, double p1, double m0, double s0, double m1, double s1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) v = u(rng) < p1 ? m1 + s1 * g(rng) : m0 + s0 * g(rng);
    return out;
}

long double two_pass_pcc(std::span<const double> a, std::span<const double> b) {
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    long double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += (a[i] - ma) * (b[i] - mb);
        aa += (a[i] - ma) * (a[i] - ma);
        bb += (b[i] - mb) * (b[i] - mb);
    }
    return ab / std::sqrt(aa * bb);
}

// Direct 11x11 Gaussian-window SSIM over valid positions.
std::pair<double, double> direct_ssim(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                                      double range) {
    double w[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
            total += w[i][j];
        }
    const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
    const std::size_t rows = a.size(), cols = a[0].size();
    double ssim = 0.0, cs = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + 11 <= rows; ++r)
        for (std::size_t c = 0; c + 11 <= cols; ++c) {
            double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double k = w[i][j] / total;
                    const double x = a[r + i][c + j], y = b[r + i][c + j];
                    ma += k * x;
                    mb += k * y;
                    aa += k * x * x;
                    bb += k * y * y;
                    ab += k * x * y;
                }
            const double csv = (2.0 * (ab - ma * mb) + c2) / (aa - ma * ma + bb - mb * mb + c2);
            const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            ssim += l * csv;
            cs += csv;
            ++count;
        }
    return {ssim / count, cs / count};
}

std::vector<std::vector<double>> halve(const std::vector<std::vector<double>>& f) {
    std::vector<std::vector<double>> out(f.size() / 2, std::vector<double>(f[0].size() / 2));
    for (std::size_t r = 0; r < out.size(); ++r)
        for (std::size_t c = 0; c < out[0].size(); ++c)
            out[r][c] = 0.25 * (f[2 * r][2 * c] + f[2 * r + 1][2 * c] + f[2 * r][2 * c + 1] + f[2 * r + 1][2 * c + 1]);
    return out;
}

}  // namespace

TEST_CASE("pcc hand cases and errors") {
    Rng rng(1);
    const auto v = test::random_volume(rng, {4, 5, 6});
    Volume neg = v;
    for (auto& x : neg.data()) x = -x;
    CHECK(pcc(v, v) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pcc(v, neg) == doctest::Approx(-1.0).epsilon(1e-14));
    const Volume flat({4, 5, 6}, {}, VolumeKind::kPhase);
    CHECK_THROWS_AS(pcc(v, flat), NumericalError);
    CHECK_THROWS_AS(pcc(v, Volume({4, 5, 5}, {}, VolumeKind::kPhase)), UsageError);
}

TEST_CASE("pcc matches a two-pass oracle and is invariant to positive affine maps") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(derive_seed(2, {seed}));
        const auto a = test::random_volume(rng, {3, 7, 9});
        auto b = test::random_volume(rng, {3, 7, 9});
        for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += 0.5 * a.data()[i];
        const double r = pcc(a, b);
        REQUIRE(std::abs(r - static_cast<double>(two_pass_pcc(a.data(), b.data()))) < 1e-12);
        std::uniform_real_distribution<double> u(0.1, 10.0);
        const double scale = u(rng), shift = u(rng) - 5.0;
        Volume c = b;
        for (auto& x : c.data()) x = scale * x + shift;
        REQUIRE(std::abs(pcc(a, c) - r) < 1e-12);
    }
}

TEST_CASE("ms-ssim self similarity and offset sensitivity") {
    Rng rng(3);
    const auto v = test::random_volume(rng, {3, 64, 80});
    const auto self = ms_ssim(v, v);
    CHECK(self.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self.scales == 3);
    Volume shifted = v;
    for (auto& x : shifted.data()) x += 10.0;
    CHECK(ms_ssim(v, shifted).value < 0.9);
    CHECK(feasible_scales(176, 176) == 5);
    CHECK(feasible_scales(10, 100) == 0);
    CHECK_THROWS_AS(ms_ssim(Volume({1, 10, 10}, {}, VolumeKind::kPhase), Volume({1, 10, 10}, {}, VolumeKind::kPhase)),
                    UsageError);
}

TEST_CASE("ms-ssim of a shifted checkerboard matches a step-by-step composition") {
    const std::size_t rows = 64, cols = 512;
    std::vector<std::vector<double>> a(rows, std::vector<double>(cols)), b = a;
    Volume va({1, rows, cols}, {}, VolumeKind::kPhase), vb = va;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            a[r][c] = ((r / 8 + c / 8) % 2) ? 1.0 : 0.0;
            b[r][c] = ((r / 8 + (c + 1) / 8) % 2) ? 1.0 : 0.0;
            va(0, r, c) = a[r][c];
            vb(0, r, c) = b[r][c];
        }
    const int scales = 3;
    const double weights[3] = {0.0448, 0.2856, 0.3001};
    const double wsum = weights[0] + weights[1] + weights[2];
    double expected = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto [ssim, cs] = direct_ssim(a, b, 1.0);
        expected *= std::pow(std::max(0.0, s + 1 == scales ? ssim : cs), weights[s] / wsum);
        a = halve(a);
        b = halve(b);
    }
    const auto got = ms_ssim(va, vb);
    CHECK(got.scales == scales);
    CHECK(std::abs(got.value - expected) < 1e-9);
    CHECK(got.value < 1.0);
    CHECK(got.value > 0.0);
}

TEST_CASE("confusion counts, dsc and ber") {
    const auto ref = labels({1, 1, 8}, {1, 1, 1, 0, 0, 0, 0, 0});
    const auto test = labels({1, 1, 8}, {1, 1, 0, 1, 0, 0, 0, 0});
    const auto c = confusion(ref, test);
    CHECK(c.tp == 2);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 4);
    CHECK(dsc(c) == doctest::Approx(4.0 / 6.0));
    CHECK(ber(c) == doctest::Approx(0.25));
    CHECK(dsc(ref, ref) == 1.0);
    CHECK(ber(ref, ref) == 0.0);
    Volume flipped = ref;
    for (auto& x : flipped.data()) x = 1.0 - x;
    CHECK(dsc(ref, flipped) == 0.0);
    CHECK(ber(ref, flipped) == 1.0);
    const std::vector<char> none(8, 0);
    CHECK_THROWS_AS(confusion(ref, test, none), UsageError);
    std::vector<char> half(8, 0);
    std::fill(half.begin(), half.begin() + 4, 1);
    CHECK(confusion(ref, test, half).total() == 4);
}

TEST_CASE("ber is zero exactly when dsc is one") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(4, {seed}));
        std::uniform_int_distribution<int> bit(0, 1);
        std::vector<double> r(20);
        for (auto& x : r) x = bit(rng);
        r[0] = 0.0;
        r[1] = 1.0;
        std::vector<double> t(r);
        if (seed % 2) t[static_cast<std::size_t>(seed % 20)] = 1.0 - t[static_cast<std::size_t>(seed % 20)];
        const auto c = confusion(labels({1, 4, 5}, r), labels({1, 4, 5}, t));
        REQUIRE(c.total() == 20);
        REQUIRE((ber(c) == 0.0) == (dsc(c) == 1.0));
    }
}

TEST_CASE("em threshold of a symmetric mixture sits at the midpoint") {
    Rng rng(5);
    const auto v = mixture(rng, 20000, 0.5, 0.0, 0.01, 1.0, 0.01);
    const auto g = em_fit(v);
    CHECK(!g.degenerate);
    CHECK(std::abs(g.threshold - 0.5) < 0.01);
    // Grid search of the decision boundary: labels from the fitted posterior switch at the threshold.
    double best = 0.0, best_gap = 1e300;
    for (int k = 1; k < 1000; ++k) {
        const double x = k / 1000.0;
        const double a = g.p0 * std::exp(-std::pow(x - g.mean0, 2) / (2 * g.var0)) / std::sqrt(g.var0);
        const double b = g.p1 * std::exp(-std::pow(x - g.mean1, 2) / (2 * g.var1)) / std::sqrt(g.var1);
        if (std::abs(std::log(a) - std::log(b)) < best_gap) {
            best_gap = std::abs(std::log(a) - std::log(b));
            best = x;
        }
    }
    CHECK(std::abs(best - g.threshold) < 1e-3);
}

TEST_CASE("em recovers mixture priors") {
    Rng rng(6);
    const auto v = mixture(rng, 20000, 0.3, 0.0, 0.1, 1.0, 0.1);
    const auto g = em_fit(v);
    CHECK(std::abs(g.p0 - 0.7) < 0.02);
    CHECK(std::abs(g.p1 - 0.3) < 0.02);
    CHECK(g.p0 + g.p1 == doctest::Approx(1.0));
    CHECK(g.mean0 < g.mean1);
}

TEST_CASE("em on constant input is degenerate") {
    const std::vector<double> v(100, 0.7);
    const auto g = em_fit(v);
    CHECK(g.degenerate);
    CHECK(is_ambiguous(g));
    CHECK_THROWS_AS(em_fit(std::span<const double>{}), UsageError);
    const auto lab = binarize_with_priors(Volume({1, 10, 10}, {}, VolumeKind::kPhase, v), 0.5, 0.5);
    for (double x : lab.data()) CHECK(x == 0.0);
}

TEST_CASE("em log-likelihood never decreases") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(derive_seed(7, {seed}));
        std::uniform_real_distribution<double> u(0.05, 0.95);
        const auto v = mixture(rng, 2000, u(rng), 0.0, u(rng), 1.0 + u(rng), u(rng));
        const auto g = em_fit(v);
        for (std::size_t k = 1; k < g.log_likelihood.size(); ++k)
            REQUIRE(g.log_likelihood[k] >= g.log_likelihood[k - 1] - 1e-9 * std::abs(g.log_likelihood[k - 1]));
        CHECK(g.iterations <= 50);
    }
}

TEST_CASE("a clamp spike does not capture a component") {
    Rng rng(8);
    auto v = mixture(rng, 10000, 0.4, 0.2, 0.05, 1.0, 0.05);
    for (std::size_t i = 0; i < 800; ++i) v[i] = 0.0;
    const auto g = em_fit(v);
    CHECK(g.mean1 > 0.8);
    CHECK(g.threshold > 0.4);
    CHECK(g.threshold < 0.8);
}

TEST_CASE("bayes boundary") {
    CHECK(bayes_boundary(0.5, 0.0, 1.0, 0.5, 2.0, 1.0) == doctest::Approx(1.0));
    // Equal variances: x = mid + var ln(p0/p1) / (m1 - m0).
    CHECK(bayes_boundary(0.8, 0.0, 0.04, 0.2, 1.0, 0.04) == doctest::Approx(0.5 + 0.04 * std::log(4.0)));
    const double x = bayes_boundary(0.6, 0.0, 0.01, 0.4, 1.0, 0.09);
    const auto density = [](double p, double m, double v, double t) {
        return p * std::exp(-(t - m) * (t - m) / (2 * v)) / std::sqrt(v);
    };
    CHECK(density(0.6, 0.0, 0.01, x) == doctest::Approx(density(0.4, 1.0, 0.09, x)).epsilon(1e-9));
    CHECK(x > 0.0);
    CHECK(x < 1.0);
}

TEST_CASE("binarization with priors follows the Bayes boundary") {
    Rng rng(9);
    const auto values = mixture(rng, 20000, 0.2, 0.0, 0.1, 1.0, 0.1);
    const Volume v({1, 100, 200}, {}, VolumeKind::kPhase, values);
    const auto fit = em_threshold(v);
    std::vector<double> grid(100001);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = fit.mean0 + (fit.mean1 - fit.mean0) * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
    const auto lab = binarize_with_priors(Volume({1, 1, grid.size()}, {}, VolumeKind::kPhase, grid), fit, 0.8, 0.2);
    const auto first = std::find(lab.data().begin(), lab.data().end(), 1.0);
    REQUIRE(first != lab.data().end());
    const double empirical = grid[static_cast<std::size_t>(first - lab.data().begin())];
    CHECK(std::all_of(first, lab.data().end(), [](double x) { return x == 1.0; }));
    const double boundary = bayes_boundary(0.8, fit.mean0, fit.var0, 0.2, fit.mean1, fit.var1);
    CHECK(std::abs(empirical - boundary) < 0.01 * std::abs(boundary));

    const auto equal = binarize_with_priors(v, fit, 0.5, 0.5);
    const auto midpoint = bayes_boundary(0.5, fit.mean0, fit.var0, 0.5, fit.mean1, fit.var1);
    for (std::size_t i = 0; i < values.size(); ++i)
        if (std::abs(values[i] - midpoint) > 1e-9) REQUIRE((equal.data()[i] > 0.5) == (values[i] > midpoint));

    const auto none = binarize_with_priors(v, fit, 1.0, 0.0);
    for (double x : none.data()) REQUIRE(x == 0.0);
    CHECK_THROWS_AS(binarize_with_priors(v, fit, -0.1, 1.1), UsageError);
}

TEST_CASE("ambiguous layer rule") {
    Volume v({3, 40, 50}, {}, VolumeKind::kPhase);
    Rng rng(10);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t y = 0; y < 40; ++y)
        for (std::size_t x = 0; x < 50; ++x) {
            v(0, y, x) = (x < 25) ? 0.0 : 1.0;
            v(1, y, x) = 0.3;
            v(2, y, x) = ((x < 25) ? 0.0 : 1.0) + 0.4 * g(rng);
        }
    const auto mask = ambiguous_layer_mask(v);
    CHECK(mask == std::vector<char>{1, 0, 0});
    const auto vm = voxel_mask(v.dims(), mask);
    CHECK(std::count(vm.begin(), vm.end(), 1) == 40 * 50);
    GaussianMixture rule;
    rule.mean0 = 0.0;
    rule.mean1 = 1.0;
    rule.var0 = rule.var1 = 0.16;
    CHECK(is_ambiguous(rule));
    rule.var0 = rule.var1 = 0.01;
    CHECK(!is_ambiguous(rule));
}

TEST_CASE("evaluate on a noisy copy of a bimodal volume") {
    Rng rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    Volume ref({4, 48, 48}, {}, VolumeKind::kPhase);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 48; ++y)
            for (std::size_t x = 0; x < 48; ++x) ref(z, y, x) = ((x / 6 + y / 6) % 3 == 0) ? 0.8 : 0.0;
    Volume test = ref;
    for (auto& x : test.data()) x += 0.02 * g(rng);
    const auto r = evaluate(ref, test);
    CHECK(r.pcc > 0.99);
    CHECK(r.ms_ssim > 0.9);
    CHECK(r.ms_ssim <= 1.0);
    CHECK(r.dsc == doctest::Approx(1.0));
    CHECK(r.ber == 0.0);
    CHECK(r.p0 + r.p1 == doctest::Approx(1.0));
    CHECK(r.counts.total() == ref.size());
    CHECK(r.excluded_layers.empty());
    const auto j = to_json(r);
    CHECK(j.at("confusion").at("tp").get<std::uint64_t>() == r.counts.tp);
    CHECK_THROWS_AS(evaluate(ref, Volume({4, 48, 47}, {}, VolumeKind::kPhase)), UsageError);
}
