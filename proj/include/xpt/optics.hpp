#pragma once

#include <cstdint>
#include <vector>

#include "xpt/volume.hpp"

namespace xpt::optics {

/// Paraxial angular-spectrum propagator over a fixed grid and distance.
/// Transfer function exp(-i*pi*wavelength*dz*|q|^2) applied between unitary FFTs.
class Propagator {
public:
    Propagator(std::size_t rows, std::size_t cols, double pitch_nm, double dz_nm, double wavelength_nm);

    [[nodiscard]] ComplexField2D forward(const ComplexField2D& u) const;
    [[nodiscard]] ComplexField2D backward(const ComplexField2D& u) const;  // propagation by -dz, the adjoint
    void forward_inplace(ComplexField2D& u) const;
    void backward_inplace(ComplexField2D& u) const;

    [[nodiscard]] double dz() const { return dz_; }

private:
    void apply(ComplexField2D& u, bool conjugate) const;

    std::size_t rows_;
    std::size_t cols_;
    double dz_;
    std::vector<cdouble> kernel_;
};

/// Free-space propagation by dz. `pad` = 2 doubles the grid (zero fill) for validation runs.
ComplexField2D propagate(const ComplexField2D& u, double dz_nm, double wavelength_nm, int pad = 1);
ComplexField2D propagate_inverse(const ComplexField2D& u, double dz_nm, double wavelength_nm, int pad = 1);

/// Mutually incoherent, orthonormal probe modes with normalized powers.
struct ProbeSet {
    std::vector<ComplexField2D> modes;  // unit L2 norm each
    std::vector<double> mode_powers;    // sum to 1
    double waist_nm = 0.0;

    [[nodiscard]] std::size_t mode_count() const { return modes.size(); }
    [[nodiscard]] std::size_t rows() const { return modes.front().rows(); }
    [[nodiscard]] std::size_t cols() const { return modes.front().cols(); }
    [[nodiscard]] double pitch() const { return modes.front().pitch(); }
    [[nodiscard]] double footprint_nm() const { return 2.0 * waist_nm; }
    /// sqrt(power_m) * P_m, the field that enters the forward model.
    [[nodiscard]] ComplexField2D weighted_mode(std::size_t m) const;
};

struct ProbeGrid {
    std::size_t rows = 16;
    std::size_t cols = 16;
    double pitch_nm = 14.0;
};

/// Hermite-Gaussian modes in total-order sequence, Gram-Schmidt orthonormalized on the grid,
/// each given a seeded global phase, then propagated by `defocus_nm` (0 = in focus).
/// Powers follow power_decay^m, normalized.
ProbeSet make_probe(int mode_count, double waist_nm, const ProbeGrid& grid, double power_decay,
                    std::uint64_t seed, double defocus_nm = 0.0, double wavelength_nm = 0.1409);

/// Rebuilds a ProbeSet from fields carrying sqrt(power) weighting (the on-disk form).
ProbeSet probe_from_weighted(std::vector<ComplexField2D> weighted, double waist_nm = 0.0);
std::vector<ComplexField2D> weighted_modes(const ProbeSet& probe);

}  // namespace xpt::optics
