#include "xpt/scanplan.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "xpt/config.hpp"
#include "xpt/error.hpp"
#include "xpt/phantom.hpp"

namespace xpt::scan {

PixelOffset ScanPlan::window_origin(std::size_t n, std::size_t j) const {
    const auto& p = positions.at(n).at(j);
    const long half = window_px / 2;
    return {std::lround(p.y_nm / pixel_pitch_nm) - half, std::lround(p.x_nm / pixel_pitch_nm) - half};
}

nlohmann::json to_json(const ScanPlan& plan) {
    nlohmann::json positions = nlohmann::json::array();
    for (const auto& list : plan.positions) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& p : list) row.push_back({p.y_nm, p.x_nm});
        positions.push_back(std::move(row));
    }
    return {{"angles_deg", plan.angles_deg},       {"positions_nm", positions},
            {"overlap", plan.overlap},             {"footprint_nm", plan.footprint_nm},
            {"window_px", plan.window_px},         {"pixel_pitch_nm", plan.pixel_pitch_nm},
            {"plane", {plan.plane_rows, plan.plane_cols}}};
}

ScanPlan scan_plan_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"angles_deg", "positions_nm", "overlap", "footprint_nm", "window_px", "pixel_pitch_nm", "plane"},
                        "scan plan");
    ScanPlan plan;
    try {
        plan.angles_deg = j.at("angles_deg").get<std::vector<double>>();
        for (const auto& row : j.at("positions_nm")) {
            std::vector<Position> list;
            for (const auto& p : row) list.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            plan.positions.push_back(std::move(list));
        }
        plan.overlap = j.value("overlap", 0.0);
        plan.footprint_nm = j.value("footprint_nm", 0.0);
        plan.window_px = j.at("window_px").get<int>();
        plan.pixel_pitch_nm = j.at("pixel_pitch_nm").get<double>();
        const auto plane = j.at("plane").get<std::vector<std::size_t>>();
        if (plane.size() != 2) throw DataError("scan plan 'plane' must be [rows, cols]");
        plan.plane_rows = plane[0];
        plan.plane_cols = plane[1];
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed scan plan: ") + e.what());
    }
    if (plan.positions.size() != plan.angles_deg.size()) throw DataError("scan plan needs one position list per angle");
    if (plan.window_px < 2 || !(plan.pixel_pitch_nm > 0) || plan.plane_rows == 0 || plan.plane_cols == 0) {
        throw DataError("scan plan has an invalid window, pitch or plane size");
    }
    return plan;
}

std::vector<double> make_angles(int count, double half_range_deg) {
    if (count < 1) throw UsageError("angle count must be >= 1");
    if (!(half_range_deg > 0.0)) throw UsageError("angular half-range must be > 0");
    if (count == 1) return {0.0};
    std::vector<double> angles(static_cast<std::size_t>(count));
    const double step = 2.0 * half_range_deg / (count - 1);
    for (int i = 0; i < count; ++i) angles[static_cast<std::size_t>(i)] = -half_range_deg + step * i;
    // Exact mirror symmetry: fill the upper half from the lower one.
    for (int i = 0; i < count / 2; ++i) angles[static_cast<std::size_t>(count - 1 - i)] = -angles[static_cast<std::size_t>(i)];
    if (count % 2 == 1) angles[static_cast<std::size_t>(count / 2)] = 0.0;
    return angles;
}

std::vector<double> make_ptycho_grid(double extent_nm, double footprint_nm, double overlap, double window_nm) {
    if (overlap < 0.0 || overlap >= 1.0) throw UsageError("overlap must lie in [0, 1)");
    if (!(footprint_nm > 0.0)) throw UsageError("probe footprint must be > 0");
    if (window_nm <= 0.0) window_nm = footprint_nm;
    const double step = footprint_nm * (1.0 - overlap);
    if (step >= extent_nm) throw UsageError("scan step is not smaller than the extent");
    if (window_nm > extent_nm) throw UsageError("probe window exceeds the scan extent");
    std::vector<double> out;
    const double last = extent_nm - window_nm;
    const double tol = 1e-9 * extent_nm;
    for (std::size_t k = 0;; ++k) {
        const double p = static_cast<double>(k) * step;
        if (p > last + tol) break;
        out.push_back(p);
    }
    if (out.back() < last - tol) out.push_back(last);
    return out;
}

ScanPlan make_scan_plan(std::vector<double> angles_deg, std::size_t rows, std::size_t cols, double pitch_nm,
                        double footprint_nm, double overlap, int window_px) {
    if (window_px < 2) throw UsageError("probe window must be >= 2 pixels");
    ScanPlan plan;
    plan.angles_deg = std::move(angles_deg);
    plan.overlap = overlap;
    plan.footprint_nm = footprint_nm;
    plan.window_px = window_px;
    plan.pixel_pitch_nm = pitch_nm;
    plan.plane_rows = rows;
    plan.plane_cols = cols;
    // Boxes of one footprint whose centers sweep [0, (n - 1) * pitch].
    const auto ys = make_ptycho_grid(static_cast<double>(rows - 1) * pitch_nm + footprint_nm, footprint_nm, overlap);
    const auto xs = make_ptycho_grid(static_cast<double>(cols - 1) * pitch_nm + footprint_nm, footprint_nm, overlap);
    std::vector<Position> grid;
    for (double y : ys)
        for (double x : xs) grid.push_back({y, x});
    plan.positions.assign(plan.angles_deg.size(), grid);
    return plan;
}

namespace {

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

RotationTable make_rotation_table(const Dims3& dims, const Pitch3& pitch, double angle_deg) {
    RotationTable t;
    t.nz = dims.z;
    t.nx = dims.x;
    t.index.resize(dims.z * dims.x);
    t.weight.resize(dims.z * dims.x);
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    const double cz = 0.5 * static_cast<double>(dims.z - 1);
    const double cx = 0.5 * static_cast<double>(dims.x - 1);
    const long nz = static_cast<long>(dims.z);
    const long nx = static_cast<long>(dims.x);
    for (std::size_t zl = 0; zl < dims.z; ++zl) {
        const double zp = (static_cast<double>(zl) - cz) * pitch.z;
        for (std::size_t xl = 0; xl < dims.x; ++xl) {
            const double xp = (static_cast<double>(xl) - cx) * pitch.x;
            // Lab beam axis z' maps to object direction (x, z) = (sin a, cos a).
            const double sx = snap(cx + (ca * xp + sa * zp) / pitch.x);
            const double sz = snap(cz + (-sa * xp + ca * zp) / pitch.z);
            const double fx = std::floor(sx);
            const double fz = std::floor(sz);
            const double wx = sx - fx;
            const double wz = sz - fz;
            const long x0 = static_cast<long>(fx);
            const long z0 = static_cast<long>(fz);
            auto& idx = t.index[zl * dims.x + xl];
            auto& w = t.weight[zl * dims.x + xl];
            const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const long zs[4] = {z0, z0, z0 + 1, z0 + 1};
            const double ws[4] = {(1 - wx) * (1 - wz), wx * (1 - wz), (1 - wx) * wz, wx * wz};
            for (int k = 0; k < 4; ++k) {
                const bool inside = xs[k] >= 0 && xs[k] < nx && zs[k] >= 0 && zs[k] < nz && ws[k] != 0.0;
                idx[k] = inside ? zs[k] * nx + xs[k] : -1;
                w[k] = inside ? ws[k] : 0.0;
            }
        }
    }
    return t;
}

Volume rotate_volume(const Volume& v, double angle_deg) {
    const auto& d = v.dims();
    const auto table = make_rotation_table(d, v.pitch(), angle_deg);
    Volume out(d, v.pitch(), v.kind() == VolumeKind::kLabel ? VolumeKind::kPhase : v.kind());
    const auto src = v.data();
    auto dst = out.data();
    for (std::size_t zl = 0; zl < d.z; ++zl)
        for (std::size_t xl = 0; xl < d.x; ++xl) {
            const auto& idx = table.index[zl * d.x + xl];
            const auto& w = table.weight[zl * d.x + xl];
            for (std::size_t y = 0; y < d.y; ++y) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) {
                    if (idx[k] < 0) continue;
                    const auto zx = static_cast<std::size_t>(idx[k]);
                    s += w[k] * src[((zx / d.x) * d.y + y) * d.x + zx % d.x];
                }
                dst[d.index(zl, y, xl)] = s;
            }
        }
    return out;
}

std::vector<RealField2D> rotate_and_project_bands(const Volume& phase, double angle_deg, int slice_count) {
    const auto& d = phase.dims();
    if (slice_count < 1) throw UsageError("slice count must be >= 1");
    if (static_cast<std::size_t>(slice_count) > d.z) {
        throw UsageError("slice count " + std::to_string(slice_count) + " exceeds z-dimension " + std::to_string(d.z));
    }
    const Volume rotated = angle_deg == 0.0 ? phase : rotate_volume(phase, angle_deg);
    const auto edges = phantom::band_edges(d.z, static_cast<std::size_t>(slice_count));
    std::vector<RealField2D> bands;
    for (int l = 0; l < slice_count; ++l) {
        RealField2D b(d.y, d.x, phase.pitch().x);
        for (std::size_t z = edges[static_cast<std::size_t>(l)]; z < edges[static_cast<std::size_t>(l) + 1]; ++z)
            for (std::size_t y = 0; y < d.y; ++y)
                for (std::size_t x = 0; x < d.x; ++x) b(y, x) += rotated(z, y, x);
        bands.push_back(std::move(b));
    }
    return bands;
}

std::vector<ComplexField2D> rotate_and_slice(const Volume& phase, double angle_deg, int slice_count) {
    std::vector<ComplexField2D> slices;
    for (const auto& band : rotate_and_project_bands(phase, angle_deg, slice_count)) {
        ComplexField2D s(band.rows(), band.cols(), band.pitch());
        for (std::size_t i = 0; i < band.size(); ++i) s[i] = std::polar(1.0, band[i]);
        slices.push_back(std::move(s));
    }
    return slices;
}

}  // namespace xpt::scan
