#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "xpt/volume.hpp"

namespace xpt::metrics {

/// Pearson correlation over all voxels. Throws NumericalError on a constant input.
double pcc(std::span<const double> a, std::span<const double> b);
double pcc(const Volume& a, const Volume& b);

inline constexpr int kMaxScales = 5;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kScaleWeights[kMaxScales] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct SsimTerms {
    double ssim = 0.0;  // mean of l * c * s
    double cs = 0.0;    // mean of c * s
};

/// Single-scale SSIM with the 11x11 Gaussian window, evaluated on 'valid' positions only.
SsimTerms ssim_terms(const RealField2D& a, const RealField2D& b, double data_range);

/// 2x2 block mean; odd trailing rows/columns are dropped.
RealField2D downsample2(const RealField2D& f);

/// Number of dyadic scales whose smaller side stays >= the window size, capped at `requested`.
int feasible_scales(std::size_t rows, std::size_t cols, int requested = kMaxScales);

/// 2D multi-scale SSIM. Uses min(requested, feasible) scales with the leading weights renormalized
/// to sum to one; negative per-scale terms are clamped to zero.
double ms_ssim_2d(const RealField2D& ref, const RealField2D& test, double data_range, int scales);

struct MsSsimResult {
    double value = 0.0;
    int scales = 0;
};

/// Slice-wise (xy) MS-SSIM averaged over z. The dynamic range is that of the reference volume.
MsSsimResult ms_ssim(const Volume& ref, const Volume& test, int requested_scales = kMaxScales);

/// Two-component 1D Gaussian mixture; component 1 has the larger mean.
struct GaussianMixture {
    double p0 = 0.5, p1 = 0.5;
    double mean0 = 0.0, mean1 = 0.0;
    double var0 = 0.0, var1 = 0.0;
    double threshold = 0.0;  // Bayes boundary under the fitted priors
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    std::vector<double> log_likelihood;  // per iteration, before the M-step
};

inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kSigmaFloorFraction = 0.1;

/// EM fit started from the median split; stops after `max_iterations` or when the
/// log-likelihood gains less than `tolerance`. Component standard deviations are kept at or
/// above sigma_floor_fraction * (max - min), which stops a spike of identical values (such as a
/// non-negativity clamp) from capturing a whole component.
GaussianMixture em_fit(std::span<const double> values, int max_iterations = 50, double tolerance = 1e-9,
                       double sigma_floor_fraction = kSigmaFloorFraction);
GaussianMixture em_threshold(const Volume& v);

/// Point between (or nearest the midpoint of) the two means where p0 N0(x) = p1 N1(x).
double bayes_boundary(double p0, double mean0, double var0, double p1, double mean1, double var1);

/// argmax_k p(x|k) p(k), with class-conditional densities fitted to `v` and priors supplied.
/// A degenerate fit labels every voxel 0.
Volume binarize_with_priors(const Volume& v, double p0, double p1);
Volume binarize_with_priors(const Volume& v, const GaussianMixture& fit, double p0, double p1);

struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    [[nodiscard]] std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// Counts over voxels whose mask entry is nonzero (every voxel when the mask is empty).
ConfusionCounts confusion(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask = {});
double dsc(const ConfusionCounts& c);
double ber(const ConfusionCounts& c);
double dsc(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask = {});
double ber(const Volume& ref_labels, const Volume& test_labels, std::span<const char> mask = {});

/// A layer is ambiguous when its fit is degenerate or |mean1 - mean0| < 2 (sigma0 + sigma1).
bool is_ambiguous(const GaussianMixture& fit);

/// One entry per z-layer: 1 = evaluated, 0 = excluded.
std::vector<char> ambiguous_layer_mask(const Volume& ref_phase);

/// Expands a per-layer mask to a per-voxel mask.
std::vector<char> voxel_mask(const Dims3& dims, std::span<const char> layer_mask);

struct MetricsReport {
    double pcc = 0.0;
    double ms_ssim = 0.0;
    int ms_ssim_scales = 0;
    double dsc = 0.0;
    double ber = 0.0;
    double threshold_ref = 0.0;
    double threshold_test = 0.0;
    double p0 = 0.5;
    double p1 = 0.5;
    std::vector<std::size_t> excluded_layers;
    ConfusionCounts counts;
};

/// Full comparison of a reconstruction against a reference phase volume.
MetricsReport evaluate(const Volume& ref, const Volume& test);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace xpt::metrics
