#include "xpt/optics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/rng.hpp"

namespace xpt::optics {

Propagator::Propagator(std::size_t rows, std::size_t cols, double pitch_nm, double dz_nm, double wavelength_nm)
    : rows_(rows), cols_(cols), dz_(dz_nm), kernel_(rows * cols) {
    if (!(wavelength_nm > 0.0)) throw UsageError("wavelength must be > 0");
    if (!std::isfinite(dz_nm)) throw NumericalError("propagation distance is not finite");
    const double fy0 = 1.0 / (static_cast<double>(rows) * pitch_nm);
    const double fx0 = 1.0 / (static_cast<double>(cols) * pitch_nm);
    for (std::size_t r = 0; r < rows; ++r) {
        const double fy = fy0 * static_cast<double>(fft::freq_index(r, rows));
        for (std::size_t c = 0; c < cols; ++c) {
            const double fx = fx0 * static_cast<double>(fft::freq_index(c, cols));
            kernel_[r * cols + c] = std::polar(1.0, -std::numbers::pi * wavelength_nm * dz_nm * (fx * fx + fy * fy));
        }
    }
}

void Propagator::apply(ComplexField2D& u, bool conjugate) const {
    if (u.rows() != rows_ || u.cols() != cols_) throw UsageError("propagator grid mismatch");
    if (dz_ == 0.0) return;
    fft::forward2d(u);
    for (std::size_t i = 0; i < kernel_.size(); ++i) u[i] *= conjugate ? std::conj(kernel_[i]) : kernel_[i];
    fft::inverse2d(u);
}

void Propagator::forward_inplace(ComplexField2D& u) const { apply(u, false); }
void Propagator::backward_inplace(ComplexField2D& u) const { apply(u, true); }

ComplexField2D Propagator::forward(const ComplexField2D& u) const {
    ComplexField2D out = u;
    apply(out, false);
    return out;
}

ComplexField2D Propagator::backward(const ComplexField2D& u) const {
    ComplexField2D out = u;
    apply(out, true);
    return out;
}

ComplexField2D propagate(const ComplexField2D& u, double dz_nm, double wavelength_nm, int pad) {
    require_finite(u, "propagate");
    if (pad < 1) throw UsageError("pad factor must be >= 1");
    if (dz_nm == 0.0) return u;
    if (pad == 1) return Propagator(u.rows(), u.cols(), u.pitch(), dz_nm, wavelength_nm).forward(u);

    const std::size_t rows = u.rows() * static_cast<std::size_t>(pad);
    const std::size_t cols = u.cols() * static_cast<std::size_t>(pad);
    const std::size_t r0 = (rows - u.rows()) / 2;
    const std::size_t c0 = (cols - u.cols()) / 2;
    ComplexField2D big(rows, cols, u.pitch());
    for (std::size_t r = 0; r < u.rows(); ++r)
        for (std::size_t c = 0; c < u.cols(); ++c) big(r0 + r, c0 + c) = u(r, c);
    Propagator(rows, cols, u.pitch(), dz_nm, wavelength_nm).forward_inplace(big);
    ComplexField2D out(u.rows(), u.cols(), u.pitch());
    for (std::size_t r = 0; r < u.rows(); ++r)
        for (std::size_t c = 0; c < u.cols(); ++c) out(r, c) = big(r0 + r, c0 + c);
    return out;
}

ComplexField2D propagate_inverse(const ComplexField2D& u, double dz_nm, double wavelength_nm, int pad) {
    return propagate(u, -dz_nm, wavelength_nm, pad);
}

ComplexField2D ProbeSet::weighted_mode(std::size_t m) const {
    ComplexField2D out = modes.at(m);
    const double s = std::sqrt(mode_powers.at(m));
    for (auto& v : out.data()) v *= s;
    return out;
}

namespace {

double hermite(int n, double x) {
    double h0 = 1.0;
    if (n == 0) return h0;
    double h1 = 2.0 * x;
    for (int k = 1; k < n; ++k) {
        const double h2 = 2.0 * x * h1 - 2.0 * k * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

// (nx, ny) pairs ordered by total order, then by descending nx.
std::vector<std::pair<int, int>> mode_orders(int count) {
    std::vector<std::pair<int, int>> out;
    for (int total = 0; static_cast<int>(out.size()) < count; ++total) {
        for (int nx = total; nx >= 0 && static_cast<int>(out.size()) < count; --nx) out.emplace_back(nx, total - nx);
    }
    return out;
}

void normalize(ComplexField2D& f) {
    const double n = l2_norm(f);
    if (!(n > 0.0)) throw NumericalError("probe mode collapsed to zero during orthogonalization");
    for (auto& v : f.data()) v /= n;
}

}  // namespace

ProbeSet make_probe(int mode_count, double waist_nm, const ProbeGrid& grid, double power_decay, std::uint64_t seed,
                    double defocus_nm, double wavelength_nm) {
    if (mode_count < 1) throw UsageError("probe needs at least one mode");
    if (!(waist_nm > 0.0)) throw UsageError("probe waist must be > 0");
    if (!(power_decay > 0.0)) throw UsageError("power_decay must be > 0");
    const double fov = static_cast<double>(std::min(grid.rows, grid.cols)) * grid.pitch_nm;
    if (2.0 * waist_nm >= 0.5 * fov) {
        throw UsageError("grid too small for waist: footprint " + std::to_string(2.0 * waist_nm) +
                         " nm must be < half of the " + std::to_string(fov) + " nm field of view");
    }

    ProbeSet probe;
    probe.waist_nm = waist_nm;
    const double cy = static_cast<double>(grid.rows / 2);
    const double cx = static_cast<double>(grid.cols / 2);
    const double scale = std::sqrt(2.0) / waist_nm;
    for (const auto& [nx, ny] : mode_orders(mode_count)) {
        ComplexField2D f(grid.rows, grid.cols, grid.pitch_nm);
        for (std::size_t r = 0; r < grid.rows; ++r) {
            const double y = (static_cast<double>(r) - cy) * grid.pitch_nm;
            for (std::size_t c = 0; c < grid.cols; ++c) {
                const double x = (static_cast<double>(c) - cx) * grid.pitch_nm;
                f(r, c) = hermite(nx, scale * x) * hermite(ny, scale * y) *
                          std::exp(-(x * x + y * y) / (waist_nm * waist_nm));
            }
        }
        probe.modes.push_back(std::move(f));
    }

    // Modified Gram-Schmidt, two passes for orthogonality at the 1e-8 level on coarse grids.
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t m = 0; m < probe.modes.size(); ++m) {
            for (std::size_t k = 0; k < m; ++k) {
                const cdouble proj = inner(probe.modes[k], probe.modes[m]);
                for (std::size_t i = 0; i < probe.modes[m].size(); ++i) probe.modes[m][i] -= proj * probe.modes[k][i];
            }
            normalize(probe.modes[m]);
        }
    }

    Rng rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (std::size_t m = 0; m < probe.modes.size(); ++m) {
        const cdouble g = m == 0 ? cdouble{1.0, 0.0} : std::polar(1.0, phase(rng));
        for (auto& v : probe.modes[m].data()) v *= g;
        if (defocus_nm != 0.0) probe.modes[m] = propagate(probe.modes[m], defocus_nm, wavelength_nm);
    }

    double total = 0.0;
    for (int m = 0; m < mode_count; ++m) {
        probe.mode_powers.push_back(std::pow(power_decay, m));
        total += probe.mode_powers.back();
    }
    for (auto& p : probe.mode_powers) p /= total;
    return probe;
}

std::vector<ComplexField2D> weighted_modes(const ProbeSet& probe) {
    std::vector<ComplexField2D> out;
    for (std::size_t m = 0; m < probe.mode_count(); ++m) out.push_back(probe.weighted_mode(m));
    return out;
}

ProbeSet probe_from_weighted(std::vector<ComplexField2D> weighted, double waist_nm) {
    if (weighted.empty()) throw DataError("probe file holds no modes");
    ProbeSet probe;
    double total = 0.0;
    for (auto& f : weighted) {
        const double n = l2_norm(f);
        if (!(n > 0.0)) throw DataError("probe file holds an all-zero mode");
        probe.mode_powers.push_back(n * n);
        total += n * n;
        for (auto& v : f.data()) v /= n;
        probe.modes.push_back(std::move(f));
    }
    for (auto& p : probe.mode_powers) p /= total;
    if (waist_nm <= 0.0) {
        // Second moment of the dominant mode: <x^2> = w^2 / 4 for a Gaussian intensity.
        const auto& f = probe.modes.front();
        double sx = 0, sy = 0, s2 = 0, w = 0;
        for (std::size_t r = 0; r < f.rows(); ++r)
            for (std::size_t c = 0; c < f.cols(); ++c) {
                const double i = std::norm(f(r, c));
                sx += i * c;
                sy += i * r;
                w += i;
            }
        sx /= w;
        sy /= w;
        for (std::size_t r = 0; r < f.rows(); ++r)
            for (std::size_t c = 0; c < f.cols(); ++c) s2 += std::norm(f(r, c)) * ((c - sx) * (c - sx) + (r - sy) * (r - sy));
        waist_nm = 2.0 * std::sqrt(s2 / w / 2.0) * f.pitch();
    }
    probe.waist_nm = waist_nm;
    return probe;
}

}  // namespace xpt::optics
