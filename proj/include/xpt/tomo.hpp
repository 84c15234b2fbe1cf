#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "xpt/config.hpp"
#include "xpt/optics.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/volume.hpp"

namespace xpt::tomo {

/// Parallel-beam projections indexed (angle, y, x'), values are line integrals (value * nm).
struct Sinogram {
    std::vector<double> angles_deg;
    std::size_t rows = 0;  // detector y
    std::size_t cols = 0;  // detector x'
    double pitch_nm = 14.0;
    std::vector<double> data;

    [[nodiscard]] std::size_t angle_count() const { return angles_deg.size(); }
    double& at(std::size_t n, std::size_t y, std::size_t x) { return data[(n * rows + y) * cols + x]; }
    double at(std::size_t n, std::size_t y, std::size_t x) const { return data[(n * rows + y) * cols + x]; }
    [[nodiscard]] std::span<const double> projection(std::size_t n) const {
        return std::span<const double>(data).subspan(n * rows * cols, rows * cols);
    }
};

/// Rotation-about-y projector with bilinear sampling, precomputed per angle as a sparse
/// (x' <- (z, x)) matrix shared by every detector row y. backward() is its exact transpose.
class Projector {
public:
    Projector(const Dims3& dims, const Pitch3& pitch, std::span<const double> angles_deg);

    [[nodiscard]] Sinogram forward(const Volume& v) const;
    [[nodiscard]] Volume backward(const Sinogram& s) const;

    void forward_angle(std::size_t n, std::span<const double> volume, std::span<double> projection) const;
    void backward_angle(std::size_t n, std::span<const double> projection, std::span<double> volume) const;

    [[nodiscard]] std::size_t angle_count() const { return angles_.size(); }
    [[nodiscard]] const Dims3& dims() const { return dims_; }
    [[nodiscard]] const Pitch3& pitch() const { return pitch_; }

private:
    struct Entry {
        std::size_t zx;  // object z * nx + x
        double weight;
    };
    Dims3 dims_;
    Pitch3 pitch_;
    std::vector<double> angles_;
    // rays_[n][x'] lists the object (z, x) cells feeding detector column x'.
    std::vector<std::vector<std::vector<Entry>>> rays_;
};

Sinogram radon(const Volume& v, std::span<const double> angles_deg);
Volume backproject(const Sinogram& s, const Dims3& dims, const Pitch3& pitch);

/// Volume grid implied by a sinogram: (z = x' count, y, x) with isotropic detector pitch.
Dims3 default_dims(const Sinogram& s);

/// Ram-Lak filtered back-projection (band-limited spatial ramp, zero-padded rows).
Volume fbp(const Sinogram& s, const Dims3& dims);

struct IterativeOptions {
    int iterations = 10;
    double relaxation = 1.0;
    bool non_negative = true;
    std::vector<double>* residual_log = nullptr;  // ||b - Ax|| before each iteration, then after the last
};

/// x <- x + C A^T R (b - A x), with R, C inverse row / column sums.
Volume sirt(const Sinogram& s, const Dims3& dims, const IterativeOptions& options);

/// One iteration = one sweep over angles in ascending order, each a block update
/// x <- x + lambda C_n A_n^T R_n (b_n - A_n x).
Volume sart(const Sinogram& s, const Dims3& dims, const IterativeOptions& options);

/// Dispatch by method name: "fbp", "sirt" or "sart". `iterations` applies to the iterative methods.
Volume reconstruct(std::string_view method, const Sinogram& s, const Dims3& dims, int iterations);

struct PlaneFit {
    double offset = 0.0;
    double slope_x = 0.0;  // per pixel
    double slope_y = 0.0;
};

/// Least-squares plane a + b x + c y over the pixels where mask is nonzero (all pixels if empty).
PlaneFit fit_plane(const RealField2D& p, std::span<const char> mask = {});
RealField2D remove_phase_ramp(const RealField2D& p, std::span<const char> mask = {});

/// Keys bicubic (a = -0.5) upsampling; out(2i, 2j) == in(i, j). Borders use linear extrapolation.
RealField2D upsample2x(const RealField2D& p);

/// 2x2x2 block mean, the inverse-resolution companion of a 2x upsampled reconstruction.
Volume bin2x(const Volume& v);

/// Thin-object (L = 1) phase retrieval settings for the projection front end.
struct RetrievalOptions {
    int iterations = 50;
    double step = 1.0;
    double momentum = 0.8;
    int ramp_border_px = 2;  // left/right detector columns used for the ramp fit; 0 = whole projection
};

struct GoldOptions {
    RetrievalOptions retrieval{};
    int sart_iterations = 10;
    bool upsample = true;
    std::size_t depth = 0;  // z voxels of the original grid; 0 = slice_count * slice_spacing / pitch
};

/// Per-angle thin-object phase retrieval, phase-ramp removal, 2x upsampling, SART reconstruction.
/// The result is in rad per original voxel on the (possibly doubled) grid.
Volume gold_pipeline(const sim::DiffractionStack& stack, const optics::ProbeSet& probe, const scan::ScanPlan& plan,
                     const RunConfig& config, const GoldOptions& options = {});

/// The tail of gold_pipeline: optional 2x upsampling of each projection, then SART.
Volume gold_from_projections(const Sinogram& coarse, std::size_t depth, const GoldOptions& options);

/// Thin-object phase projections (rad) for every angle, as a sinogram of line integrals in rad * nm.
Sinogram retrieve_projections(const sim::DiffractionStack& stack, const optics::ProbeSet& probe,
                              const scan::ScanPlan& plan, const RunConfig& config,
                              const RetrievalOptions& options = {});

}  // namespace xpt::tomo
