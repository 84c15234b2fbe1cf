#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xpt/config.hpp"
#include "xpt/optics.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/volume.hpp"

namespace xpt::approx {

/// How modelled amplitudes are compared with sqrt(I).
///  kIncoherentSum: (sqrt(sum_m |F psi_m|^2) - sqrt(I))^2, consistent with the mixed-state intensity model.
///  kPerMode:       sum_m (|F psi_m| - sqrt(I))^2, each mode compared with the full measurement.
/// Both coincide for a single mode.
enum class LossModel { kIncoherentSum, kPerMode };

inline constexpr double kAmplitudeFloor = 1e-12;

/// Loss value and Wirtinger gradients for one tomographic angle.
/// Gradients are stored as d(loss)/dX (not d/dX*): the steepest-descent direction for X is -conj(dX).
struct LossState {
    double loss = 0.0;
    std::vector<ComplexField2D> object_gradient;                     // [l], full object plane
    std::vector<std::vector<std::vector<ComplexField2D>>> wavefield_gradient;  // [j][m][l], probe window
    std::vector<std::vector<ComplexField2D>> residual;               // chi, [j][m]
    std::vector<ComplexField2D> probe_gradient;                      // [m], summed over j
    std::vector<RealField2D> illumination;                           // sum_j sum_m |P^[l]|^2, [l]
};

/// Ptychographic amplitude objective for the positions of a single tomo-scan.
class AngleObjective {
public:
    AngleObjective(const sim::DiffractionStack& stack, std::size_t angle_index, const scan::ScanPlan& plan,
                   const optics::ProbeSet& probe, const RunConfig& config, LossModel model = LossModel::kIncoherentSum);

    [[nodiscard]] double loss(std::span<const ComplexField2D> slices) const;
    [[nodiscard]] LossState gradients(std::span<const ComplexField2D> slices, bool keep_wavefields = true) const;

    [[nodiscard]] std::size_t plane_rows() const { return rows_; }
    [[nodiscard]] std::size_t plane_cols() const { return cols_; }

private:
    void check_slices(std::span<const ComplexField2D> slices) const;

    const sim::DiffractionStack& stack_;
    std::size_t n_;
    const scan::ScanPlan& plan_;
    std::vector<ComplexField2D> modes_;  // sqrt(power)-weighted
    optics::Propagator prop_;
    LossModel model_;
    std::size_t rows_;
    std::size_t cols_;
    std::size_t window_;
};

/// Per-angle unit-transmission start: L slices of ones over the object plane.
std::vector<ComplexField2D> unit_slices(std::size_t count, std::size_t rows, std::size_t cols, double pitch_nm);

struct DescentOptions {
    int iterations = 2;
    double step = 0.0;      // gamma; 0 selects 1 / slice_count
    double epsilon = 1e-12;
    double momentum = 0.0;       // heavy-ball coefficient; 0 = plain gradient descent
    LossModel model = LossModel::kIncoherentSum;
};

/// Object update dO = -gamma * conj(grad) / (max_r illumination + epsilon), per slice, with
/// gamma = options.step, or 1 / L when step is 0.
void apply_step(std::vector<ComplexField2D>& slices, const LossState& state, const DescentOptions& options);

struct AngleEstimate {
    std::vector<ComplexField2D> slices;
    std::vector<double> loss_history;  // entry k: loss after k updates
};

/// Runs `options.iterations` gradient-descent steps from unit transmission for angle n.
/// With momentum beta > 0 each update is v <- beta v + dO, O <- O + v.
AngleEstimate retrieve_angle(const sim::DiffractionStack& stack, std::size_t n, const scan::ScanPlan& plan,
                             const optics::ProbeSet& probe, const RunConfig& config, const DescentOptions& options);

struct LossLogEntry {
    std::size_t angle_index;
    int iteration;
    double loss;
};

struct ApproximantOptions {
    DescentOptions descent{};
    std::size_t target_z = 0;  // 0: thickness / pixel pitch, rounded
    bool keep_per_angle = false;
};

struct ApproximantResult {
    Volume volume;                                       // mean of rotated-back per-angle estimates
    std::vector<std::vector<RealField2D>> per_angle;     // angle(O^[l]) after gauge removal, when kept
    std::vector<LossLogEntry> log;
};

/// Band-replicated volume of per-slice phases: each slice's phase is spread evenly over its share
/// of `target_z` voxels (value / band thickness), pitch_z = thickness / target_z.
Volume dilate_slices(std::span<const RealField2D> slice_phases, std::size_t target_z, double thickness_nm);

/// Full pipeline: per-angle descent, argument extraction, mean-phase removal, dilation to the
/// target z-count, rotation back by -angle, and the ordered mean over all angles.
ApproximantResult approximant(const sim::DiffractionStack& stack, const optics::ProbeSet& probe,
                              const scan::ScanPlan& plan, const RunConfig& config, const ApproximantOptions& options = {});

}  // namespace xpt::approx
