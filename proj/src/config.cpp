#include "xpt/config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xpt/error.hpp"

namespace xpt {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view context) {
    if (!j.is_object()) throw UsageError(std::string(context) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw UsageError(std::string(context) + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T json_get_or(const nlohmann::json& j, std::string_view key, T fallback) {
    const std::string k(key);
    if (!j.contains(k) || j.at(k).is_null()) return fallback;
    try {
        return j.at(k).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config key '" + k + "': " + e.what());
    }
}

template double json_get_or<double>(const nlohmann::json&, std::string_view, double);
template int json_get_or<int>(const nlohmann::json&, std::string_view, int);
template bool json_get_or<bool>(const nlohmann::json&, std::string_view, bool);
template std::uint64_t json_get_or<std::uint64_t>(const nlohmann::json&, std::string_view, std::uint64_t);
template std::string json_get_or<std::string>(const nlohmann::json&, std::string_view, std::string);
template std::vector<int> json_get_or<std::vector<int>>(const nlohmann::json&, std::string_view,
                                                        std::vector<int>);
template std::vector<double> json_get_or<std::vector<double>>(const nlohmann::json&, std::string_view,
                                                              std::vector<double>);
template std::vector<std::string> json_get_or<std::vector<std::string>>(const nlohmann::json&,
                                                                        std::string_view,
                                                                        std::vector<std::string>);

void RunConfig::validate() const {
    if (!(wavelength_nm > 0.0) || !std::isfinite(wavelength_nm)) throw UsageError("wavelength must be > 0");
    if (slice_count < 1) throw UsageError("slice_count must be >= 1");
    if (mode_count < 1) throw UsageError("mode_count must be >= 1");
    if (!(slice_spacing_nm > 0.0)) throw UsageError("slice_spacing must be > 0");
    if (detector_pixels < 2) throw UsageError("detector_pixels must be >= 2");
    if (!(pixel_pitch_nm > 0.0)) throw UsageError("pixel_pitch must be > 0");
    if (!(photon_count > 0.0)) throw UsageError("photon_count must be > 0 (null for noiseless)");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"wavelength_nm", "slice_count", "mode_count", "slice_spacing_nm", "detector_pixels",
                         "pixel_pitch_nm", "photon_count", "seed"},
                        "run config");
    RunConfig c;
    c.wavelength_nm = json_get_or(j, "wavelength_nm", c.wavelength_nm);
    c.slice_count = json_get_or(j, "slice_count", c.slice_count);
    c.mode_count = json_get_or(j, "mode_count", c.mode_count);
    c.slice_spacing_nm = json_get_or(j, "slice_spacing_nm", c.slice_spacing_nm);
    c.detector_pixels = json_get_or(j, "detector_pixels", c.detector_pixels);
    c.pixel_pitch_nm = json_get_or(j, "pixel_pitch_nm", c.pixel_pitch_nm);
    c.photon_count = json_get_or(j, "photon_count", c.photon_count);
    c.seed = json_get_or(j, "seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j = {{"wavelength_nm", c.wavelength_nm},   {"slice_count", c.slice_count},
                        {"mode_count", c.mode_count},         {"slice_spacing_nm", c.slice_spacing_nm},
                        {"detector_pixels", c.detector_pixels}, {"pixel_pitch_nm", c.pixel_pitch_nm},
                        {"seed", c.seed}};
    j["photon_count"] = std::isfinite(c.photon_count) ? nlohmann::json(c.photon_count) : nlohmann::json(nullptr);
    return j;
}

}  // namespace xpt
