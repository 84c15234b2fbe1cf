#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace xpt {

/// Physical and numerical settings shared by simulation and reconstruction.
struct RunConfig {
    double wavelength_nm = 0.1409;   // 8.8 keV
    int slice_count = 5;             // L
    int mode_count = 3;              // M
    double slice_spacing_nm = 89.6;  // dz between multi-slices
    int detector_pixels = 16;        // square detector == computational probe window
    double pixel_pitch_nm = 14.0;
    double photon_count = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 1;

    /// Throws UsageError when an invariant is violated.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// Rejects a JSON object carrying any key outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view context);

/// Looks up an optional typed field; throws UsageError on type mismatch.
template <typename T>
T json_get_or(const nlohmann::json& j, std::string_view key, T fallback);

}  // namespace xpt
