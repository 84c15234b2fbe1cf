#pragma once

// Straight-loop reference implementations used as independent oracles.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "xpt/optics.hpp"
#include "xpt/volume.hpp"

namespace xpt::oracle {

/// Unitary 2D DFT by direct summation; sign -1 forward, +1 inverse.
inline ComplexField2D dft(const ComplexField2D& u, int sign) {
    const std::size_t ny = u.rows(), nx = u.cols();
    ComplexField2D out(ny, nx, u.pitch());
    const double norm = 1.0 / std::sqrt(static_cast<double>(ny * nx));
    for (std::size_t ky = 0; ky < ny; ++ky)
        for (std::size_t kx = 0; kx < nx; ++kx) {
            cdouble s{};
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t x = 0; x < nx; ++x) {
                    const double ph = sign * 2.0 * std::numbers::pi *
                                      (static_cast<double>(ky * y) / static_cast<double>(ny) +
                                       static_cast<double>(kx * x) / static_cast<double>(nx));
                    s += u(y, x) * std::polar(1.0, ph);
                }
            out(ky, kx) = s * norm;
        }
    return out;
}

inline double signed_frequency(std::size_t k, std::size_t n) {
    return k < (n + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

/// Paraxial free-space propagation with direct DFTs.
inline ComplexField2D fresnel(const ComplexField2D& u, double dz, double wavelength) {
    auto spec = dft(u, -1);
    const std::size_t ny = u.rows(), nx = u.cols();
    for (std::size_t ky = 0; ky < ny; ++ky)
        for (std::size_t kx = 0; kx < nx; ++kx) {
            const double fy = signed_frequency(ky, ny) / (static_cast<double>(ny) * u.pitch());
            const double fx = signed_frequency(kx, nx) / (static_cast<double>(nx) * u.pitch());
            spec(ky, kx) *= std::polar(1.0, -std::numbers::pi * wavelength * dz * (fx * fx + fy * fy));
        }
    return dft(spec, +1);
}

/// Multi-slice exit wave: transmit through slice 0, then alternate propagate and transmit.
inline ComplexField2D exit_wave(const ComplexField2D& probe, std::span<const ComplexField2D> slices, double dz,
                                double wavelength) {
    ComplexField2D w = probe;
    for (std::size_t l = 0; l < slices.size(); ++l) {
        if (l > 0) w = fresnel(w, dz, wavelength);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= slices[l][i];
    }
    return w;
}

/// Mixed-state far-field intensity sum_m power_m |F psi_m|^2.
inline RealField2D intensity(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices, double dz,
                             double wavelength) {
    RealField2D out(probe.rows(), probe.cols(), probe.pitch());
    for (std::size_t m = 0; m < probe.mode_count(); ++m) {
        const auto far = dft(exit_wave(probe.modes[m], slices, dz, wavelength), -1);
        for (std::size_t i = 0; i < far.size(); ++i) out[i] += probe.mode_powers[m] * std::norm(far[i]);
    }
    return out;
}

/// Amplitude loss of one probe window against a measured pattern.
inline double window_loss(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices,
                          std::span<const double> measured, double dz, double wavelength, bool per_mode) {
    std::vector<ComplexField2D> far;
    for (std::size_t m = 0; m < probe.mode_count(); ++m)
        far.push_back(dft(exit_wave(probe.weighted_mode(m), slices, dz, wavelength), -1));
    double loss = 0.0;
    for (std::size_t q = 0; q < measured.size(); ++q) {
        const double a = std::sqrt(measured[q]);
        if (per_mode) {
            for (const auto& f : far) loss += std::pow(std::abs(f[q]) - a, 2);
        } else {
            double s = 0.0;
            for (const auto& f : far) s += std::norm(f[q]);
            loss += std::pow(std::sqrt(s) - a, 2);
        }
    }
    return loss;
}

}  // namespace xpt::oracle
