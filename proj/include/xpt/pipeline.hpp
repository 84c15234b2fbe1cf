#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xpt/analysis.hpp"
#include "xpt/approximant.hpp"
#include "xpt/config.hpp"
#include "xpt/optics.hpp"
#include "xpt/phantom.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/tomo.hpp"

namespace xpt::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

struct ProbeSettings {
    double waist_nm = 40.0;
    double power_decay = 0.5;
    double defocus_nm = 0.0;
};

struct ScanSettings {
    int angle_count = 29;
    double half_range_deg = 70.0;
    double overlap = 0.7;
};

struct ReconSettings {
    std::vector<std::string> methods{"fbp", "sirt", "sart", "gold"};
    int sirt_iterations = 50;
    int sart_iterations = 10;
    tomo::RetrievalOptions retrieval{};
};

/// One JSON document with sections run, phantom, probe, scan, approximant, tomo and (optional) sweep.
struct PipelineConfig {
    RunConfig run{};
    phantom::PhantomSpec phantom{};
    ProbeSettings probe{};
    ScanSettings scan{};
    approx::ApproximantOptions approximant{};
    ReconSettings tomo{};
    std::optional<analysis::SweepOptions> sweep;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);

/// Sets the run and phantom seeds.
void override_seed(PipelineConfig& c, std::uint64_t seed);

ProbeSettings probe_settings_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeSettings& p);

/// Probe built from the run config (grid, mode count, wavelength) and the probe settings.
optics::ProbeSet build_probe(const RunConfig& run, const ProbeSettings& settings);

/// Scan plan over the lab plane of a (z, y, x) volume for the given probe.
scan::ScanPlan build_plan(const ScanSettings& scan, const Dims3& dims, const RunConfig& run,
                          const optics::ProbeSet& probe);

/// SHA-256 of the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const PipelineConfig& c);

struct Artifact {
    std::string name;
    std::string path;  // relative to the output directory
    std::string sha256;
};

struct StageTime {
    std::string stage;
    double seconds = 0.0;
};

struct PipelineManifest {
    std::vector<Artifact> artifacts;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::vector<StageTime> stage_times;
};

nlohmann::json to_json(const PipelineManifest& m);

/// phantom -> simulate -> approximant -> baselines -> metrics -> analysis, then manifest.json.
/// Existing outputs are overwritten only with `force`. A failing stage is named in the error.
PipelineManifest run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir, bool force);

/// Throws UsageError when `path` exists and overwriting is not allowed.
void guard_output(const std::filesystem::path& path, bool force);

}  // namespace xpt::pipeline
