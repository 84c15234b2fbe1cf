#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <json.hpp>

#include "xpt/volume.hpp"

namespace xpt::scan {

/// Probe center in object-plane coordinates (nm); pixel (r, c) sits at (r * pitch, c * pitch).
struct Position {
    double y_nm = 0.0;
    double x_nm = 0.0;
    bool operator==(const Position&) const = default;
};

struct PixelOffset {
    long row = 0;
    long col = 0;
};

/// Tomographic angles plus per-angle ptychographic probe positions.
struct ScanPlan {
    std::vector<double> angles_deg;
    std::vector<std::vector<Position>> positions;  // one list per angle
    double overlap = 0.0;
    double footprint_nm = 0.0;
    int window_px = 16;
    double pixel_pitch_nm = 14.0;
    std::size_t plane_rows = 0;  // object-plane size in pixels (lab y, x)
    std::size_t plane_cols = 0;

    [[nodiscard]] std::size_t angle_count() const { return angles_deg.size(); }
    /// Top-left corner of the probe window for (angle n, position j), rounded to whole pixels.
    [[nodiscard]] PixelOffset window_origin(std::size_t n, std::size_t j) const;

    bool operator==(const ScanPlan&) const = default;
};

nlohmann::json to_json(const ScanPlan& plan);
ScanPlan scan_plan_from_json(const nlohmann::json& j);

/// N uniformly spaced angles over [-half_range, +half_range] inclusive; N = 1 gives {0}.
std::vector<double> make_angles(int count, double half_range_deg);

/// 1D raster of footprint-box origins: step = footprint * (1 - overlap), boxes of width `window`
/// (default: footprint) stay inside [0, extent]. A final flush box is appended when the raster
/// stops short of the far edge.
std::vector<double> make_ptycho_grid(double extent_nm, double footprint_nm, double overlap, double window_nm = 0.0);

/// Full plan over an object plane of rows x cols pixels: probe centers cover every pixel center
/// of the plane, identical for all angles.
ScanPlan make_scan_plan(std::vector<double> angles_deg, std::size_t rows, std::size_t cols, double pitch_nm,
                        double footprint_nm, double overlap, int window_px);

/// Bilinear weights mapping each lab-frame (z', x') sample to object-frame voxels for a rotation
/// about y by `angle_deg`. Samples falling outside the grid receive zero weight.
struct RotationTable {
    std::size_t nz = 0;
    std::size_t nx = 0;
    std::vector<std::array<long, 4>> index;  // object (z * nx + x), -1 when outside
    std::vector<std::array<double, 4>> weight;
};

RotationTable make_rotation_table(const Dims3& dims, const Pitch3& pitch, double angle_deg);

/// Resamples `v` into the lab frame of a sample rotated by `angle_deg` about y (zero fill).
Volume rotate_volume(const Volume& v, double angle_deg);

/// Rotates, partitions lab z into L equal bands, sums phase per band and returns exp(i * phase).
std::vector<ComplexField2D> rotate_and_slice(const Volume& phase, double angle_deg, int slice_count);

/// Band-summed phases (the argument of rotate_and_slice's output), kept real.
std::vector<RealField2D> rotate_and_project_bands(const Volume& phase, double angle_deg, int slice_count);

}  // namespace xpt::scan
