#include "xpt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "xpt/error.hpp"
#include "xpt/parallel.hpp"

namespace xpt::metrics {

namespace {

void require_same_dims(const Volume& a, const Volume& b) {
    if (a.dims() != b.dims()) throw UsageError("volumes differ in dimensions");
}

}  // namespace

double pcc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw UsageError("pcc needs two equally sized, non-empty inputs");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw NumericalError("pcc undefined for a constant input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pcc(const Volume& a, const Volume& b) {
    require_same_dims(a, b);
    return pcc(a.data(), b.data());
}

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double t = i - kSsimWindow / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-t * t / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable 'valid' Gaussian filter of f.
RealField2D filter_valid(const RealField2D& f) {
    static const auto w = gaussian_taps();
    const std::size_t k = kSsimWindow;
    const std::size_t rows = f.rows() - k + 1;
    const std::size_t cols = f.cols() - k + 1;
    RealField2D tmp(f.rows(), cols);
    for (std::size_t r = 0; r < f.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += w[i] * f(r, c + i);
            tmp(r, c) = s;
        }
    RealField2D out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += w[i] * tmp(r + i, c);
            out(r, c) = s;
        }
    return out;
}

RealField2D product(const RealField2D& a, const RealField2D& b) {
    RealField2D out(a.rows(), a.cols(), a.pitch());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

}  // namespace

SsimTerms ssim_terms(const RealField2D& a, const RealField2D& b, double data_range) {
    if (!a.same_shape(b)) throw UsageError("ssim inputs differ in shape");
    if (a.rows() < static_cast<std::size_t>(kSsimWindow) || a.cols() < static_cast<std::size_t>(kSsimWindow)) {
        throw UsageError("ssim input smaller than the 11x11 window");
    }
    const double c1 = std::pow(kSsimK1 * data_range, 2);
    const double c2 = std::pow(kSsimK2 * data_range, 2);
    const auto mu_a = filter_valid(a);
    const auto mu_b = filter_valid(b);
    const auto e_aa = filter_valid(product(a, a));
    const auto e_bb = filter_valid(product(b, b));
    const auto e_ab = filter_valid(product(a, b));
    double ssim = 0.0, cs = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i];
        const double mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        const double cs_i = (2.0 * cov + c2) / (va + vb + c2);
        const double l_i = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += cs_i;
        ssim += l_i * cs_i;
    }
    const double n = static_cast<double>(mu_a.size());
    return {ssim / n, cs / n};
}

RealField2D downsample2(const RealField2D& f) {
    RealField2D out(f.rows() / 2, f.cols() / 2, 2.0 * f.pitch());
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = 0.25 * (f(2 * r, 2 * c) + f(2 * r, 2 * c + 1) + f(2 * r + 1, 2 * c) + f(2 * r + 1, 2 * c + 1));
        }
    return out;
}

int feasible_scales(std::size_t rows, std::size_t cols, int requested) {
    std::size_t side = std::min(rows, cols);
    int scales = 0;
    while (scales < requested && side >= static_cast<std::size_t>(kSsimWindow)) {
        ++scales;
        side /= 2;
    }
    return scales;
}

double ms_ssim_2d(const RealField2D& ref, const RealField2D& test, double data_range, int scales) {
    scales = std::min(scales, feasible_scales(ref.rows(), ref.cols(), kMaxScales));
    if (scales < 1) throw UsageError("image smaller than the 11x11 SSIM window");
    double weight_sum = 0.0;
    for (int s = 0; s < scales; ++s) weight_sum += kScaleWeights[s];
    RealField2D a = ref;
    RealField2D b = test;
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto t = ssim_terms(a, b, data_range);
        const double term = std::max(0.0, s + 1 == scales ? t.ssim : t.cs);
        value *= std::pow(term, kScaleWeights[s] / weight_sum);
        if (s + 1 < scales) {
            a = downsample2(a);
            b = downsample2(b);
        }
    }
    return value;
}

MsSsimResult ms_ssim(const Volume& ref, const Volume& test, int requested_scales) {
    require_same_dims(ref, test);
    const auto& d = ref.dims();
    const int scales = std::min(requested_scales, feasible_scales(d.y, d.x, kMaxScales));
    if (scales < 1) throw UsageError("lateral dims smaller than the 11x11 SSIM window");
    const auto [lo, hi] = std::minmax_element(ref.data().begin(), ref.data().end());
    double range = *hi - *lo;
    if (!(range > 0.0)) range = 1.0;
    std::vector<double> per_slice(d.z);
    parallel_for(d.z, [&](std::size_t z) {
        RealField2D a(d.y, d.x), b(d.y, d.x);
        for (std::size_t i = 0; i < d.y * d.x; ++i) {
            a[i] = ref.data()[z * d.y * d.x + i];
            b[i] = test.data()[z * d.y * d.x + i];
        }
        per_slice[z] = ms_ssim_2d(a, b, range, scales);
    });
    double sum = 0.0;
    for (double v : per_slice) sum += v;
    return {sum / static_cast<double>(d.z), scales};
}

double bayes_boundary(double p0, double mean0, double var0, double p1, double mean1, double var1) {
    const double mid = 0.5 * (mean0 + mean1);
    if (!(p0 > 0.0)) return -std::numeric_limits<double>::infinity();
    if (!(p1 > 0.0)) return std::numeric_limits<double>::infinity();
    // p0 N(x; m0, v0) = p1 N(x; m1, v1)  <=>  a x^2 + b x + c = 0
    const double a = 0.5 / var1 - 0.5 / var0;
    const double b = mean0 / var0 - mean1 / var1;
    const double c = mean1 * mean1 / (2.0 * var1) - mean0 * mean0 / (2.0 * var0) + std::log(p0 / p1) +
                     0.5 * std::log(var1 / var0);
    const double scale = std::max(std::abs(0.5 / var0), std::abs(0.5 / var1));
    if (std::abs(a) <= 1e-12 * scale) {
        return b != 0.0 ? -c / b : mid;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return mid;
    const double sq = std::sqrt(disc);
    // Numerically stable pair of roots.
    const double q = -0.5 * (b + std::copysign(sq, b));
    const double r1 = q / a;
    const double r2 = q != 0.0 ? c / q : r1;
    const double lo = std::min(mean0, mean1);
    const double hi = std::max(mean0, mean1);
    const bool in1 = r1 >= lo && r1 <= hi;
    const bool in2 = r2 >= lo && r2 <= hi;
    if (in1 != in2) return in1 ? r1 : r2;
    return std::abs(r1 - mid) <= std::abs(r2 - mid) ? r1 : r2;
}

namespace {

double log_normal(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2.0 * var);
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

GaussianMixture em_fit(std::span<const double> values, int max_iterations, double tolerance,
                       double sigma_floor_fraction) {
    if (values.empty()) throw UsageError("EM fit needs at least one value");
    GaussianMixture g;
    const std::size_t n = values.size();
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
        g.mean0 = g.mean1 = g.threshold = sorted.front();
        g.var0 = g.var1 = kVarianceFloor;
        g.degenerate = true;
        return g;
    }

    const double sigma_floor = sigma_floor_fraction * (sorted.back() - sorted.front());
    const double var_floor = std::max(kVarianceFloor, sigma_floor * sigma_floor);

    // Median split: lower half -> component 0, upper half -> component 1.
    const std::size_t half = std::max<std::size_t>(1, n / 2);
    auto moments = [var_floor](std::span<const double> s, double& mean, double& var) {
        mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        var = 0.0;
        for (double v : s) var += (v - mean) * (v - mean);
        var = std::max(var / static_cast<double>(s.size()), var_floor);
    };
    moments(std::span<const double>(sorted).first(half), g.mean0, g.var0);
    moments(std::span<const double>(sorted).subspan(half), g.mean1, g.var1);
    g.p0 = static_cast<double>(half) / static_cast<double>(n);
    g.p1 = 1.0 - g.p0;

    std::vector<double> r1(n);
    double previous = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        // E-step
        double ll = 0.0;
        const double lp0 = std::log(g.p0);
        const double lp1 = std::log(g.p1);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = lp0 + log_normal(values[i], g.mean0, g.var0);
            const double b = lp1 + log_normal(values[i], g.mean1, g.var1);
            const double total = log_sum_exp(a, b);
            r1[i] = std::exp(b - total);
            ll += total;
        }
        g.log_likelihood.push_back(ll);
        g.iterations = it + 1;
        if (it > 0 && ll - previous < tolerance) {
            g.converged = true;
            break;
        }
        previous = ll;

        // M-step
        double w1 = 0.0, s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w1 += r1[i];
            s1 += r1[i] * values[i];
            s0 += (1.0 - r1[i]) * values[i];
        }
        const double w0 = static_cast<double>(n) - w1;
        if (w0 <= 0.0 || w1 <= 0.0) {
            g.degenerate = true;
            break;
        }
        g.mean0 = s0 / w0;
        g.mean1 = s1 / w1;
        double q0 = 0.0, q1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            q0 += (1.0 - r1[i]) * (values[i] - g.mean0) * (values[i] - g.mean0);
            q1 += r1[i] * (values[i] - g.mean1) * (values[i] - g.mean1);
        }
        g.var0 = std::max(q0 / w0, var_floor);
        g.var1 = std::max(q1 / w1, var_floor);
        g.p0 = w0 / static_cast<double>(n);
        g.p1 = w1 / static_cast<double>(n);
    }

    if (g.mean0 > g.mean1) {
        std::swap(g.mean0, g.mean1);
        std::swap(g.var0, g.var1);
        std::swap(g.p0, g.p1);
    }
    const double spread = sorted.back() - sorted.front();
    if (g.mean1 - g.mean0 <= 1e-12 * spread || g.p0 < 0.5 / static_cast<double>(n) ||
        g.p1 < 0.5 / static_cast<double>(n)) {
        g.degenerate = true;
    }
    g.threshold = g.degenerate ? 0.5 * (g.mean0 + g.mean1)
                               : bayes_boundary(g.p0, g.mean0, g.var0, g.p1, g.mean1, g.var1);
    return g;
}

GaussianMixture em_threshold(const Volume& v) { return em_fit(v.data()); }

Volume binarize_with_priors(const Volume& v, const GaussianMixture& fit, double p0, double p1) {
    if (p0 < 0.0 || p1 < 0.0 || !(p0 + p1 > 0.0)) throw UsageError("priors must be non-negative and not both zero");
    std::vector<double> labels(v.size(), 0.0);
    if (!fit.degenerate) {
        const double lp0 = p0 > 0.0 ? std::log(p0) : -std::numeric_limits<double>::infinity();
        const double lp1 = p1 > 0.0 ? std::log(p1) : -std::numeric_limits<double>::infinity();
        const auto src = v.data();
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double a = lp0 + log_normal(src[i], fit.mean0, fit.var0);
            const double b = lp1 + log_normal(src[i], fit.mean1, fit.var1);
            labels[i] = b > a ? 1.0 : 0.0;
        }
    }
    return Volume(v.dims(), v.pitch(), VolumeKind::kLabel, std::move(labels));
}

Volume binarize_with_priors(const Volume& v, double p0, double p1) {
    return binarize_with_priors(v, em_threshold(v), p0, p1);
}

ConfusionCounts confusion(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask) {
    require_same_dims(ref_labels, test_labels);
    if (!mask.empty() && mask.size() != ref_labels.size()) throw UsageError("mask size differs from the volumes");
    ConfusionCounts c;
    const auto r = ref_labels.data();
    const auto t = test_labels.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const bool rp = r[i] > 0.5;
        const bool tp = t[i] > 0.5;
        if (rp && tp) ++c.tp;
        else if (!rp && !tp) ++c.tn;
        else if (tp) ++c.fp;
        else ++c.fn;
    }
    if (c.total() == 0) throw UsageError("evaluation mask is empty");
    return c;
}

double dsc(const ConfusionCounts& c) {
    const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fn) + static_cast<double>(c.fp);
    if (denom == 0.0) return 1.0;  // both label sets empty: perfect agreement
    return 2.0 * static_cast<double>(c.tp) / denom;
}

double ber(const ConfusionCounts& c) {
    if (c.total() == 0) throw UsageError("evaluation mask is empty");
    return static_cast<double>(c.fp + c.fn) / static_cast<double>(c.total());
}

double dsc(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask) {
    return dsc(confusion(ref_labels, test_labels, mask));
}

double ber(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask) {
    return ber(confusion(ref_labels, test_labels, mask));
}

bool is_ambiguous(const GaussianMixture& fit) {
    if (fit.degenerate) return true;
    return std::abs(fit.mean1 - fit.mean0) < 2.0 * (std::sqrt(fit.var0) + std::sqrt(fit.var1));
}

std::vector<char> ambiguous_layer_mask(const Volume& ref_phase) {
    const auto& d = ref_phase.dims();
    std::vector<char> keep(d.z, 0);
    const std::size_t plane = d.y * d.x;
    parallel_for(d.z, [&](std::size_t z) {
        keep[z] = is_ambiguous(em_fit(ref_phase.data().subspan(z * plane, plane))) ? 0 : 1;
    });
    return keep;
}

std::vector<char> voxel_mask(const Dims3& dims, std::span<const char> layer_mask) {
    if (layer_mask.size() != dims.z) throw UsageError("layer mask length differs from the z-dimension");
    std::vector<char> out(dims.count());
    const std::size_t plane = dims.y * dims.x;
    for (std::size_t z = 0; z < dims.z; ++z) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(z * plane), plane, layer_mask[z]);
    return out;
}

MetricsReport evaluate(const Volume& ref, const Volume& test) {
    require_same_dims(ref, test);
    require_finite(ref.data(), "reference volume");
    require_finite(test.data(), "test volume");
    MetricsReport r;
    r.pcc = pcc(ref, test);
    const auto ms = ms_ssim(ref, test);
    r.ms_ssim = ms.value;
    r.ms_ssim_scales = ms.scales;

    const auto layers = ambiguous_layer_mask(ref);
    for (std::size_t z = 0; z < layers.size(); ++z) {
        if (!layers[z]) r.excluded_layers.push_back(z);
    }
    if (r.excluded_layers.size() == layers.size()) throw DataError("every reference layer is ambiguous; nothing to evaluate");
    const auto mask = voxel_mask(ref.dims(), layers);

    const auto ref_fit = em_threshold(ref);
    if (ref_fit.degenerate) throw NumericalError("reference volume is not bimodal");
    r.p0 = ref_fit.p0;
    r.p1 = ref_fit.p1;
    r.threshold_ref = ref_fit.threshold;
    const auto test_fit = em_threshold(test);
    r.threshold_test = test_fit.degenerate ? test_fit.threshold
                                           : bayes_boundary(r.p0, test_fit.mean0, test_fit.var0, r.p1,
                                                            test_fit.mean1, test_fit.var1);
    const auto ref_labels = binarize_with_priors(ref, ref_fit, r.p0, r.p1);
    const auto test_labels = binarize_with_priors(test, test_fit, r.p0, r.p1);
    r.counts = confusion(ref_labels, test_labels, mask);
    r.dsc = dsc(r.counts);
    r.ber = ber(r.counts);
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    return {{"pcc", r.pcc},
            {"ms_ssim", r.ms_ssim},
            {"ms_ssim_scales", r.ms_ssim_scales},
            {"dsc", r.dsc},
            {"ber", r.ber},
            {"thresholds", {{"reference", r.threshold_ref}, {"test", r.threshold_test}}},
            {"priors", {{"p0", r.p0}, {"p1", r.p1}}},
            {"excluded_layers", r.excluded_layers},
            {"confusion", {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}}};
}

}  // namespace xpt::metrics
