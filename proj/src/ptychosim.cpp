#include "xpt/ptychosim.hpp"

#include <cmath>
#include <random>
#include <string>

#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/io.hpp"
#include "xpt/parallel.hpp"
#include "xpt/rng.hpp"

namespace xpt::sim {

Wavefront forward_exit_wave(const ComplexField2D& probe_mode, std::span<const ComplexField2D> slices,
                            const optics::Propagator& propagator) {
    if (slices.empty()) throw UsageError("forward model needs at least one slice");
    for (const auto& s : slices) {
        if (!s.same_shape(probe_mode)) throw UsageError("probe and object slices are on different grids");
    }
    Wavefront w;
    w.incident.reserve(slices.size());
    ComplexField2D field = probe_mode;
    for (std::size_t l = 0; l < slices.size(); ++l) {
        if (l > 0) propagator.forward_inplace(field);
        w.incident.push_back(field);
        for (std::size_t i = 0; i < field.size(); ++i) field[i] *= slices[l][i];
    }
    w.exit = std::move(field);
    return w;
}

Wavefront forward_exit_wave(const ComplexField2D& probe_mode, std::span<const ComplexField2D> slices, double dz_nm,
                            double wavelength_nm) {
    const optics::Propagator prop(probe_mode.rows(), probe_mode.cols(), probe_mode.pitch(), dz_nm, wavelength_nm);
    return forward_exit_wave(probe_mode, slices, prop);
}

RealField2D forward_intensity(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices,
                              const optics::Propagator& propagator) {
    RealField2D intensity(probe.rows(), probe.cols(), probe.pitch());
    for (std::size_t m = 0; m < probe.mode_count(); ++m) {
        auto far = forward_exit_wave(probe.modes[m], slices, propagator).exit;
        fft::forward2d(far);
        const double power = probe.mode_powers[m];
        for (std::size_t i = 0; i < far.size(); ++i) intensity[i] += power * std::norm(far[i]);
    }
    return intensity;
}

RealField2D forward_intensity(const optics::ProbeSet& probe, std::span<const ComplexField2D> slices, double dz_nm,
                              double wavelength_nm) {
    const optics::Propagator prop(probe.rows(), probe.cols(), probe.pitch(), dz_nm, wavelength_nm);
    return forward_intensity(probe, slices, prop);
}

std::vector<ComplexField2D> extract_window(std::span<const ComplexField2D> slices, scan::PixelOffset origin,
                                           std::size_t rows, std::size_t cols) {
    std::vector<ComplexField2D> out;
    out.reserve(slices.size());
    for (const auto& s : slices) {
        ComplexField2D w(rows, cols, s.pitch(), cdouble{1.0, 0.0});
        for (std::size_t r = 0; r < rows; ++r) {
            const long sr = origin.row + static_cast<long>(r);
            if (sr < 0 || sr >= static_cast<long>(s.rows())) continue;
            for (std::size_t c = 0; c < cols; ++c) {
                const long sc = origin.col + static_cast<long>(c);
                if (sc < 0 || sc >= static_cast<long>(s.cols())) continue;
                w(r, c) = s(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

DiffractionStack::DiffractionStack(std::vector<std::size_t> positions_per_angle, std::size_t rows, std::size_t cols)
    : counts_(std::move(positions_per_angle)), rows_(rows), cols_(cols) {
    for (auto c : counts_) offsets_.push_back(offsets_.back() + c);
    data_.assign(offsets_.back() * rows * cols, 0.0);
}

std::span<double> DiffractionStack::pattern(std::size_t n, std::size_t j) {
    if (j >= counts_.at(n)) throw UsageError("ptycho index out of range");
    return std::span<double>(data_).subspan((offsets_[n] + j) * rows_ * cols_, rows_ * cols_);
}

std::span<const double> DiffractionStack::pattern(std::size_t n, std::size_t j) const {
    if (j >= counts_.at(n)) throw UsageError("ptycho index out of range");
    return std::span<const double>(data_).subspan((offsets_[n] + j) * rows_ * cols_, rows_ * cols_);
}

void DiffractionStack::validate_against(const scan::ScanPlan& plan) const {
    if (plan.angle_count() != angle_count()) throw DataError("stack and plan disagree on the number of angles");
    for (std::size_t n = 0; n < angle_count(); ++n) {
        if (plan.positions[n].size() != counts_[n]) {
            throw DataError("stack and plan disagree on the position count at angle " + std::to_string(n));
        }
    }
    if (rows_ != static_cast<std::size_t>(plan.window_px) || cols_ != static_cast<std::size_t>(plan.window_px)) {
        throw DataError("detector size differs from the plan's probe window");
    }
    for (double v : data_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("measured intensity is negative or non-finite");
    }
}

DiffractionStack simulate_stack(const Volume& phase, const optics::ProbeSet& probe, const scan::ScanPlan& plan,
                                const RunConfig& config) {
    config.validate();
    const auto w = static_cast<std::size_t>(plan.window_px);
    if (probe.rows() != w || probe.cols() != w) throw UsageError("probe grid differs from the plan's window");
    const double max_y = static_cast<double>(phase.dims().y - 1) * plan.pixel_pitch_nm;
    const double max_x = static_cast<double>(phase.dims().x - 1) * plan.pixel_pitch_nm;
    std::vector<std::size_t> counts;
    for (std::size_t n = 0; n < plan.angle_count(); ++n) {
        for (const auto& p : plan.positions[n]) {
            if (p.y_nm < -1e-9 || p.x_nm < -1e-9 || p.y_nm > max_y + 1e-9 || p.x_nm > max_x + 1e-9) {
                throw UsageError("scan position (" + std::to_string(p.y_nm) + ", " + std::to_string(p.x_nm) +
                                 ") nm lies outside the object plane");
            }
        }
        counts.push_back(plan.positions[n].size());
    }

    DiffractionStack stack(counts, w, w);
    stack.photon_count = config.photon_count;
    const optics::Propagator prop(w, w, probe.pitch(), config.slice_spacing_nm, config.wavelength_nm);

    parallel_for(plan.angle_count(), [&](std::size_t n) {
        const auto slices = scan::rotate_and_slice(phase, plan.angles_deg[n], config.slice_count);
        for (std::size_t j = 0; j < counts[n]; ++j) {
            const auto window = extract_window(slices, plan.window_origin(n, j), w, w);
            const auto intensity = forward_intensity(probe, window, prop);
            auto out = stack.pattern(n, j);
            if (!std::isfinite(config.photon_count)) {
                std::copy(intensity.data().begin(), intensity.data().end(), out.begin());
                continue;
            }
            double total = 0.0;
            for (double v : intensity.data()) total += v;
            const double scale = total > 0.0 ? config.photon_count / total : 0.0;
            Rng rng(derive_seed(config.seed, {n, j}));
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double mean = intensity[i] * scale;
                out[i] = mean > 0.0 ? static_cast<double>(std::poisson_distribution<long long>(mean)(rng)) / scale : 0.0;
            }
        }
    });
    return stack;
}

void write_stack(const DiffractionStack& stack, const std::filesystem::path& path, double pitch_nm) {
    const Dims3 dims{stack.pattern_count(), stack.rows(), stack.cols()};
    Volume v(dims, {1.0, pitch_nm, pitch_nm}, VolumeKind::kIntensity,
             std::vector<double>(stack.data().begin(), stack.data().end()));
    write_volume(v, path);
    nlohmann::json index = {{"positions_per_angle", stack.positions_per_angle()},
                            {"detector", {stack.rows(), stack.cols()}},
                            {"layout", "(n*J+j, qy, qx), unshifted FFT order"}};
    index["photon_count"] = std::isfinite(stack.photon_count) ? nlohmann::json(stack.photon_count) : nlohmann::json(nullptr);
    auto index_path = path;
    index_path += ".json";
    write_json(index, index_path);
}

DiffractionStack read_stack(const std::filesystem::path& path) {
    const Volume v = read_volume(path);
    if (v.kind() != VolumeKind::kIntensity) throw DataError("stack file is not an intensity container");
    auto index_path = path;
    index_path += ".json";
    const auto index = read_json(index_path);
    std::vector<std::size_t> counts;
    try {
        counts = index.at("positions_per_angle").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed stack index: ") + e.what());
    }
    DiffractionStack stack(counts, v.dims().y, v.dims().x);
    if (stack.pattern_count() != v.dims().z) throw DataError("stack index disagrees with the container's pattern count");
    if (index.contains("photon_count") && !index.at("photon_count").is_null()) {
        stack.photon_count = index.at("photon_count").get<double>();
    }
    std::size_t k = 0;
    for (std::size_t n = 0; n < stack.angle_count(); ++n)
        for (std::size_t j = 0; j < stack.position_count(n); ++j) {
            auto out = stack.pattern(n, j);
            for (auto& value : out) value = v.data()[k++];
        }
    for (double value : stack.data()) {
        if (!(value >= 0.0) || !std::isfinite(value)) throw DataError("stack holds a negative or non-finite intensity");
    }
    return stack;
}

}  // namespace xpt::sim
