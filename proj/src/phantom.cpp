#include "xpt/phantom.hpp"

#include <cmath>
#include <random>

#include "xpt/config.hpp"
#include "xpt/error.hpp"
#include "xpt/rng.hpp"

namespace xpt::phantom {

void PhantomSpec::validate() const {
    if (dims.z == 0 || dims.y == 0 || dims.x == 0) throw UsageError("phantom dims must be >= 1");
    if (layer_count < 1) throw UsageError("layer_count must be >= 1");
    if (wire_width_min < 1 || wire_width_max < wire_width_min) throw UsageError("wire widths must satisfy 1 <= min <= max");
    if (!(pitch_factor >= 1.0)) throw UsageError("pitch_factor must be >= 1");
    if (track_occupancy < 0.0 || track_occupancy > 1.0) throw UsageError("track_occupancy must lie in [0,1]");
    if (via_density < 0.0 || via_density > 1.0) throw UsageError("via_density must lie in [0,1]");
    if (via_size < 1 || via_spacing < via_size) throw UsageError("vias need 1 <= via_size <= via_spacing");
    if (!(metal_phase_shift >= 0.0) || !std::isfinite(metal_phase_shift)) throw UsageError("metal_phase_shift must be >= 0");
    if (orientations.empty()) throw UsageError("orientation set is empty");
    for (int o : orientations) {
        if (o != 0 && o != 90 && o != 45) throw UsageError("orientations must be drawn from {0, 45, 90}");
    }
    if (dims.z < static_cast<std::size_t>(2 * layer_count - 1)) {
        throw UsageError("dims too small: " + std::to_string(dims.z) + " z-voxels cannot hold " +
                         std::to_string(2 * layer_count - 1) + " layers");
    }
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"dims", "pitch_nm", "layer_count", "wire_width_min", "wire_width_max", "pitch_factor",
                         "track_occupancy", "via_density", "via_size", "via_spacing", "metal_phase_shift",
                         "orientations", "support", "support_margin", "seed"},
                        "phantom spec");
    PhantomSpec s;
    if (j.contains("dims")) {
        const auto d = j.at("dims").get<std::vector<std::size_t>>();
        if (d.size() != 3) throw UsageError("phantom dims must be [z, y, x]");
        s.dims = {d[0], d[1], d[2]};
    }
    if (j.contains("pitch_nm")) {
        const double p = j.at("pitch_nm").get<double>();
        s.pitch = {p, p, p};
    }
    s.layer_count = json_get_or(j, "layer_count", s.layer_count);
    s.wire_width_min = json_get_or(j, "wire_width_min", s.wire_width_min);
    s.wire_width_max = json_get_or(j, "wire_width_max", s.wire_width_max);
    s.pitch_factor = json_get_or(j, "pitch_factor", s.pitch_factor);
    s.track_occupancy = json_get_or(j, "track_occupancy", s.track_occupancy);
    s.via_density = json_get_or(j, "via_density", s.via_density);
    s.via_size = json_get_or(j, "via_size", s.via_size);
    s.via_spacing = json_get_or(j, "via_spacing", s.via_spacing);
    s.metal_phase_shift = json_get_or(j, "metal_phase_shift", s.metal_phase_shift);
    s.orientations = json_get_or(j, "orientations", s.orientations);
    const auto support = json_get_or<std::string>(j, "support", s.support == Support::kBox ? "box" : "cylinder");
    if (support == "box") {
        s.support = Support::kBox;
    } else if (support == "cylinder") {
        s.support = Support::kCylinder;
    } else {
        throw UsageError("support must be 'box' or 'cylinder'");
    }
    s.support_margin = json_get_or(j, "support_margin", s.support_margin);
    s.seed = json_get_or(j, "seed", s.seed);
    s.validate();
    return s;
}

nlohmann::json to_json(const PhantomSpec& s) {
    return {{"dims", {s.dims.z, s.dims.y, s.dims.x}},
            {"pitch_nm", s.pitch.x},
            {"layer_count", s.layer_count},
            {"wire_width_min", s.wire_width_min},
            {"wire_width_max", s.wire_width_max},
            {"pitch_factor", s.pitch_factor},
            {"track_occupancy", s.track_occupancy},
            {"via_density", s.via_density},
            {"via_size", s.via_size},
            {"via_spacing", s.via_spacing},
            {"metal_phase_shift", s.metal_phase_shift},
            {"orientations", s.orientations},
            {"support", s.support == Support::kBox ? "box" : "cylinder"},
            {"support_margin", s.support_margin},
            {"seed", s.seed}};
}

std::vector<std::size_t> band_edges(std::size_t nz, std::size_t bands) {
    std::vector<std::size_t> edges(bands + 1);
    for (std::size_t k = 0; k <= bands; ++k) edges[k] = (k * nz + bands / 2) / bands;
    edges.front() = 0;
    edges.back() = nz;
    return edges;
}

namespace {

int wire_pitch(const PhantomSpec& s, int width) {
    return std::max(width, static_cast<int>(std::lround(s.pitch_factor * width)));
}

long positive_mod(long a, long m) { return ((a % m) + m) % m; }

}  // namespace

double expected_fill_fraction(const PhantomSpec& spec) {
    spec.validate();
    const std::size_t bands = static_cast<std::size_t>(2 * spec.layer_count - 1);
    const auto edges = band_edges(spec.dims.z, bands);
    double wire = 0.0;
    for (int w = spec.wire_width_min; w <= spec.wire_width_max; ++w) {
        wire += spec.track_occupancy * static_cast<double>(w) / wire_pitch(spec, w);
    }
    wire /= static_cast<double>(spec.wire_width_max - spec.wire_width_min + 1);
    const double via = spec.via_density * std::pow(static_cast<double>(spec.via_size) / spec.via_spacing, 2);
    double total = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
        total += static_cast<double>(edges[b + 1] - edges[b]) * (b % 2 == 0 ? wire : via);
    }
    return total / static_cast<double>(spec.dims.z);
}

Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const Dims3 d = spec.dims;
    Volume label(d, spec.pitch, VolumeKind::kLabel);
    const std::size_t bands = static_cast<std::size_t>(2 * spec.layer_count - 1);
    const auto edges = band_edges(d.z, bands);
    Rng rng(spec.seed);

    for (std::size_t b = 0; b < bands; ++b) {
        RealField2D layer(d.y, d.x);
        if (b % 2 == 0) {
            const int orientation = spec.orientations[(b / 2) % spec.orientations.size()];
            const int width = std::uniform_int_distribution<int>(spec.wire_width_min, spec.wire_width_max)(rng);
            const int pitch = wire_pitch(spec, width);
            const long offset = std::uniform_int_distribution<int>(0, pitch - 1)(rng);
            // Tracks are indexed by floor((coord + offset) / pitch); one keep-draw per track.
            const std::size_t span = orientation == 45 ? d.y + d.x : (orientation == 0 ? d.y : d.x);
            std::vector<char> keep(span / static_cast<std::size_t>(pitch) + 2);
            std::bernoulli_distribution occupied(spec.track_occupancy);
            for (auto& k : keep) k = occupied(rng);
            for (std::size_t y = 0; y < d.y; ++y) {
                for (std::size_t x = 0; x < d.x; ++x) {
                    const long coord = orientation == 0 ? static_cast<long>(y)
                                       : orientation == 90 ? static_cast<long>(x)
                                                           : static_cast<long>(x + y);
                    const long shifted = coord + offset;
                    if (positive_mod(shifted, pitch) < width && keep[static_cast<std::size_t>(shifted / pitch)]) {
                        layer(y, x) = 1.0;
                    }
                }
            }
        } else {
            const long s = spec.via_spacing;
            const long oy = std::uniform_int_distribution<long>(0, s - 1)(rng);
            const long ox = std::uniform_int_distribution<long>(0, s - 1)(rng);
            const std::size_t sites_y = (d.y + static_cast<std::size_t>(s)) / static_cast<std::size_t>(s) + 1;
            const std::size_t sites_x = (d.x + static_cast<std::size_t>(s)) / static_cast<std::size_t>(s) + 1;
            std::vector<char> filled(sites_y * sites_x);
            std::bernoulli_distribution present(spec.via_density);
            for (auto& f : filled) f = present(rng);
            for (std::size_t y = 0; y < d.y; ++y) {
                const long ty = static_cast<long>(y) + oy;
                if (ty % s >= spec.via_size) continue;
                for (std::size_t x = 0; x < d.x; ++x) {
                    const long tx = static_cast<long>(x) + ox;
                    if (tx % s >= spec.via_size) continue;
                    if (filled[static_cast<std::size_t>(ty / s) * sites_x + static_cast<std::size_t>(tx / s)]) layer(y, x) = 1.0;
                }
            }
        }
        for (std::size_t z = edges[b]; z < edges[b + 1]; ++z)
            for (std::size_t y = 0; y < d.y; ++y)
                for (std::size_t x = 0; x < d.x; ++x) label(z, y, x) = layer(y, x);
    }

    if (spec.support == Support::kCylinder) {
        const double cz = 0.5 * static_cast<double>(d.z - 1) * spec.pitch.z;
        const double cx = 0.5 * static_cast<double>(d.x - 1) * spec.pitch.x;
        const double radius = 0.5 * std::min(static_cast<double>(d.z) * spec.pitch.z, static_cast<double>(d.x) * spec.pitch.x) -
                              spec.support_margin * spec.pitch.x;
        for (std::size_t z = 0; z < d.z; ++z)
            for (std::size_t x = 0; x < d.x; ++x) {
                const double dz = static_cast<double>(z) * spec.pitch.z - cz;
                const double dx = static_cast<double>(x) * spec.pitch.x - cx;
                if (dz * dz + dx * dx > radius * radius)
                    for (std::size_t y = 0; y < d.y; ++y) label(z, y, x) = 0.0;
            }
    }

    Volume phase(d, spec.pitch, VolumeKind::kPhase);
    for (std::size_t i = 0; i < label.size(); ++i) phase.data()[i] = label.data()[i] * spec.metal_phase_shift;
    return {std::move(label), std::move(phase)};
}

Volume binarize_reference(const Volume& phase, double threshold) {
    if (!std::isfinite(threshold)) throw UsageError("binarization threshold must be finite");
    Volume out(phase.dims(), phase.pitch(), VolumeKind::kLabel);
    for (std::size_t i = 0; i < phase.size(); ++i) out.data()[i] = phase.data()[i] > threshold ? 1.0 : 0.0;
    return out;
}

}  // namespace xpt::phantom
