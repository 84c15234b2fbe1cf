#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xpt/volume.hpp"

namespace xpt::phantom {

enum class Support { kBox, kCylinder };

/// Parameters of a layered IC-like binary phantom.
///
/// The z axis is split into 2 * layer_count - 1 equal bands: wire layers alternate with via
/// layers. Wire layer k uses orientations[k % size] (0 = wires run along x, 90 = along y,
/// 45 = diagonal). Each wire layer draws one width w in [wire_width_min, wire_width_max],
/// pitch = pitch_factor * w, and a uniform random offset; each track is kept with probability
/// track_occupancy. Via layers place via_size squares on a grid of spacing via_spacing with a
/// uniform random offset, each site filled with probability via_density.
struct PhantomSpec {
    Dims3 dims{32, 32, 32};
    Pitch3 pitch{};
    int layer_count = 3;
    int wire_width_min = 2;
    int wire_width_max = 3;
    double pitch_factor = 2.0;
    double track_occupancy = 1.0;
    double via_density = 0.3;
    int via_size = 2;
    int via_spacing = 4;
    double metal_phase_shift = 0.05;  // rad per voxel
    std::vector<int> orientations{0, 90};
    Support support = Support::kCylinder;
    double support_margin = 2.0;  // voxels kept clear inside the cylinder boundary
    std::uint64_t seed = 1;

    void validate() const;
};

PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhantomSpec& s);

struct Phantom {
    Volume label;
    Volume phase;
};

Phantom generate_phantom(const PhantomSpec& spec);

/// z-band boundaries [start_k, start_{k+1}) partitioning [0, nz) into `bands` equal parts.
std::vector<std::size_t> band_edges(std::size_t nz, std::size_t bands);

/// Expected metal fraction of the generated layout (before support masking), from the layout rule.
double expected_fill_fraction(const PhantomSpec& spec);

/// Label volume with 1 where phase > threshold.
Volume binarize_reference(const Volume& phase, double threshold);

}  // namespace xpt::phantom
