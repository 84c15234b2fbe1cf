#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "xpt/config.hpp"
#include "xpt/optics.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/volume.hpp"

namespace xpt::sim {

/// Multi-slice fields for one probe mode: incident[l] is the wavefield arriving at slice l
/// (incident[0] is the probe itself) and exit is the field leaving the last slice.
struct Wavefront {
    std::vector<ComplexField2D> incident;
    ComplexField2D exit;
};

/// exit = O[L-1] P_dz[ ... P_dz[ O[0] * probe ] ], keeping every incident field.
Wavefront forward_exit_wave(const ComplexField2D& probe_mode, std::span<const ComplexField2D> slices,
                            const optics::Propagator& propagator);
Wavefront forward_exit_wave(const ComplexField2D& probe_mode, std::span<const ComplexField2D> slices, double dz_nm,
                            double wavelength_nm);

/// Mixed-state far-field intensity sum_m power_m |F psi_m|^2 (unshifted FFT order).
RealField2D forward_intensity(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices,
                              const optics::Propagator& propagator);
RealField2D forward_intensity(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices, double dz_nm,
                              double wavelength_nm);

/// Probe-window view of full-plane object slices. Pixels outside the plane are empty space (1).
std::vector<ComplexField2D> extract_window(std::span<const ComplexField2D> slices, scan::PixelOffset origin,
                                           std::size_t rows, std::size_t cols);

/// Intensities indexed (n, j, qy, qx) in unshifted FFT order.
class DiffractionStack {
public:
    DiffractionStack() = default;
    DiffractionStack(std::vector<std::size_t> positions_per_angle, std::size_t rows, std::size_t cols);

    [[nodiscard]] std::size_t angle_count() const { return counts_.size(); }
    [[nodiscard]] std::size_t position_count(std::size_t n) const { return counts_.at(n); }
    [[nodiscard]] const std::vector<std::size_t>& positions_per_angle() const { return counts_; }
    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t pattern_count() const { return offsets_.back(); }

    [[nodiscard]] std::span<double> pattern(std::size_t n, std::size_t j);
    [[nodiscard]] std::span<const double> pattern(std::size_t n, std::size_t j) const;
    [[nodiscard]] std::span<const double> data() const { return data_; }

    double photon_count = std::numeric_limits<double>::infinity();

    /// Throws DataError when shapes disagree with the plan or a value is negative / non-finite.
    void validate_against(const scan::ScanPlan& plan) const;

private:
    std::vector<std::size_t> counts_;
    std::vector<std::size_t> offsets_{0};
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Full measurement: rotate and slice per angle, window per position, mixed-state intensity,
/// optional Poisson noise (per-(n, j) seeds derived from config.seed).
DiffractionStack simulate_stack(const Volume& phase, const optics::ProbeSet& probe, const scan::ScanPlan& plan,
                                const RunConfig& config);

/// Stack file: one intensity .xptv with dims (sum_n J_n, rows, cols) plus `<path>.json` index.
void write_stack(const DiffractionStack& stack, const std::filesystem::path& path, double pitch_nm);
DiffractionStack read_stack(const std::filesystem::path& path);

}  // namespace xpt::sim
