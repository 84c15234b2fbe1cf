#include "xpt/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "xpt/digest.hpp"
#include "xpt/error.hpp"
#include "xpt/io.hpp"
#include "xpt/log.hpp"
#include "xpt/metrics.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/rng.hpp"
#include "xpt/tomo.hpp"

namespace xpt::pipeline {

namespace fs = std::filesystem;

ProbeSettings probe_settings_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"waist_nm", "power_decay", "defocus_nm"}, "probe");
    ProbeSettings p;
    p.waist_nm = json_get_or(j, "waist_nm", p.waist_nm);
    p.power_decay = json_get_or(j, "power_decay", p.power_decay);
    p.defocus_nm = json_get_or(j, "defocus_nm", p.defocus_nm);
    return p;
}

nlohmann::json to_json(const ProbeSettings& p) {
    return {{"waist_nm", p.waist_nm}, {"power_decay", p.power_decay}, {"defocus_nm", p.defocus_nm}};
}

namespace {

ScanSettings scan_settings_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"angle_count", "half_range_deg", "overlap"}, "scan");
    ScanSettings s;
    s.angle_count = json_get_or(j, "angle_count", s.angle_count);
    s.half_range_deg = json_get_or(j, "half_range_deg", s.half_range_deg);
    s.overlap = json_get_or(j, "overlap", s.overlap);
    return s;
}

nlohmann::json to_json(const ScanSettings& s) {
    return {{"angle_count", s.angle_count}, {"half_range_deg", s.half_range_deg}, {"overlap", s.overlap}};
}

approx::ApproximantOptions approximant_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"iterations", "step", "epsilon", "target_z", "loss_model"}, "approximant");
    approx::ApproximantOptions o;
    o.descent.iterations = json_get_or(j, "iterations", o.descent.iterations);
    o.descent.step = json_get_or(j, "step", o.descent.step);
    o.descent.epsilon = json_get_or(j, "epsilon", o.descent.epsilon);
    o.target_z = static_cast<std::size_t>(json_get_or(j, "target_z", 0));
    const auto model = json_get_or<std::string>(j, "loss_model", "incoherent_sum");
    if (model == "incoherent_sum") {
        o.descent.model = approx::LossModel::kIncoherentSum;
    } else if (model == "per_mode") {
        o.descent.model = approx::LossModel::kPerMode;
    } else {
        throw UsageError("approximant loss_model must be 'incoherent_sum' or 'per_mode'");
    }
    if (o.descent.iterations < 0) throw UsageError("approximant iterations must be >= 0");
    return o;
}

nlohmann::json to_json(const approx::ApproximantOptions& o) {
    return {{"iterations", o.descent.iterations},
            {"step", o.descent.step},
            {"epsilon", o.descent.epsilon},
            {"target_z", o.target_z},
            {"loss_model", o.descent.model == approx::LossModel::kIncoherentSum ? "incoherent_sum" : "per_mode"}};
}

ReconSettings recon_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"methods", "sirt_iterations", "sart_iterations", "retrieval_iterations", "retrieval_momentum",
                            "ramp_border_px"},
                        "tomo");
    ReconSettings r;
    r.methods = json_get_or(j, "methods", r.methods);
    r.sirt_iterations = json_get_or(j, "sirt_iterations", r.sirt_iterations);
    r.sart_iterations = json_get_or(j, "sart_iterations", r.sart_iterations);
    r.retrieval.iterations = json_get_or(j, "retrieval_iterations", r.retrieval.iterations);
    r.retrieval.momentum = json_get_or(j, "retrieval_momentum", r.retrieval.momentum);
    r.retrieval.ramp_border_px = json_get_or(j, "ramp_border_px", r.retrieval.ramp_border_px);
    for (const auto& m : r.methods) {
        if (m != "fbp" && m != "sirt" && m != "sart" && m != "gold") {
            throw UsageError("unknown tomo method '" + m + "'");
        }
    }
    return r;
}

nlohmann::json to_json(const ReconSettings& r) {
    return {{"methods", r.methods},
            {"sirt_iterations", r.sirt_iterations},
            {"sart_iterations", r.sart_iterations},
            {"retrieval_iterations", r.retrieval.iterations},
            {"retrieval_momentum", r.retrieval.momentum},
            {"ramp_border_px", r.retrieval.ramp_border_px}};
}

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
    static const nlohmann::json empty = nlohmann::json::object();
    return j.contains(key) ? j.at(key) : empty;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"run", "phantom", "probe", "scan", "approximant", "tomo", "sweep"}, "pipeline config");
    PipelineConfig c;
    c.run = run_config_from_json(section(j, "run"));
    c.phantom = phantom::phantom_spec_from_json(section(j, "phantom"));
    c.probe = probe_settings_from_json(section(j, "probe"));
    c.scan = scan_settings_from_json(section(j, "scan"));
    c.approximant = approximant_from_json(section(j, "approximant"));
    c.tomo = recon_from_json(section(j, "tomo"));
    if (j.contains("sweep")) c.sweep = analysis::sweep_options_from_json(j.at("sweep"));
    return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json j = {{"run", to_json(c.run)},
                        {"phantom", phantom::to_json(c.phantom)},
                        {"probe", to_json(c.probe)},
                        {"scan", to_json(c.scan)},
                        {"approximant", to_json(c.approximant)},
                        {"tomo", to_json(c.tomo)}};
    if (c.sweep) j["sweep"] = analysis::to_json(*c.sweep);
    return j;
}

void override_seed(PipelineConfig& c, std::uint64_t seed) {
    c.run.seed = seed;
    c.phantom.seed = seed;
}

optics::ProbeSet build_probe(const RunConfig& run, const ProbeSettings& settings) {
    const auto w = static_cast<std::size_t>(run.detector_pixels);
    return optics::make_probe(run.mode_count, settings.waist_nm, {w, w, run.pixel_pitch_nm}, settings.power_decay,
                              derive_seed(run.seed, {0x70726f6265ULL}), settings.defocus_nm, run.wavelength_nm);
}

scan::ScanPlan build_plan(const ScanSettings& scan, const Dims3& dims, const RunConfig& run,
                          const optics::ProbeSet& probe) {
    return scan::make_scan_plan(scan::make_angles(scan.angle_count, scan.half_range_deg), dims.y, dims.x,
                                run.pixel_pitch_nm, probe.footprint_nm(), scan.overlap, run.detector_pixels);
}

std::string config_hash(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()); }

nlohmann::json to_json(const PipelineManifest& m) {
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto& a : m.artifacts) artifacts.push_back({{"name", a.name}, {"path", a.path}, {"sha256", a.sha256}});
    nlohmann::json times = nlohmann::json::object();
    for (const auto& t : m.stage_times) times[t.stage] = t.seconds;
    return {{"artifacts", artifacts},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"tool_version", m.tool_version},
            {"stage_wall_time_s", times}};
}

void guard_output(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) {
        throw UsageError("refusing to overwrite " + path.string() + " (pass --force)");
    }
}

namespace {

template <typename Fn>
void run_stage(const std::string& name, std::vector<StageTime>& times, Fn&& fn) {
    log_event("stage_start", {{"stage", name}});
    const auto t0 = std::chrono::steady_clock::now();
    const std::string prefix = "stage '" + name + "': ";
    try {
        fn();
    } catch (const UsageError& e) {
        throw UsageError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(prefix + e.what());
    } catch (const std::exception& e) {
        throw Error(prefix + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    times.push_back({name, seconds});
    log_event("stage_done", {{"stage", name}, {"seconds", seconds}});
}

class Outputs {
public:
    Outputs(fs::path dir, bool force) : dir_(std::move(dir)), force_(force) {}

    fs::path claim(const std::string& relative) const {
        const auto path = dir_ / relative;
        guard_output(path, force_);
        return path;
    }

    void record(const std::string& name, const std::string& relative) {
        artifacts_.push_back({name, relative, sha256_file(dir_ / relative)});
    }

    [[nodiscard]] const std::vector<Artifact>& artifacts() const { return artifacts_; }

private:
    fs::path dir_;
    bool force_;
    std::vector<Artifact> artifacts_;
};

void write_text(const std::string& text, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

Volume sinogram_volume(const tomo::Sinogram& s) {
    return Volume({s.angle_count(), s.rows, s.cols}, {1.0, s.pitch_nm, s.pitch_nm}, VolumeKind::kPhase, s.data);
}

}  // namespace

PipelineManifest run_pipeline(const PipelineConfig& config, const fs::path& out_dir, bool force) {
    config.run.validate();
    config.phantom.validate();
    fs::create_directories(out_dir);
    const auto manifest_path = out_dir / "manifest.json";
    guard_output(manifest_path, force);

    PipelineManifest manifest;
    manifest.config_hash = config_hash(config);
    manifest.seed = config.run.seed;
    Outputs out(out_dir, force);
    log_event("pipeline_start", {{"config_hash", manifest.config_hash}, {"seed", manifest.seed}});

    phantom::Phantom ph;
    run_stage("phantom", manifest.stage_times, [&] {
        ph = phantom::generate_phantom(config.phantom);
        write_volume(ph.label, out.claim("label.xptv"), DType::kU8);
        out.record("label", "label.xptv");
        write_volume(ph.phase, out.claim("phase.xptv"));
        out.record("phase", "phase.xptv");
    });

    optics::ProbeSet probe;
    scan::ScanPlan plan;
    sim::DiffractionStack stack;
    run_stage("simulate", manifest.stage_times, [&] {
        probe = build_probe(config.run, config.probe);
        write_complex_stack(optics::weighted_modes(probe), out.claim("probe.xptv"));
        out.record("probe", "probe.xptv");
        plan = build_plan(config.scan, ph.phase.dims(), config.run, probe);
        write_json(scan::to_json(plan), out.claim("plan.json"));
        out.record("plan", "plan.json");
        stack = sim::simulate_stack(ph.phase, probe, plan, config.run);
        out.claim("stack.xptv.json");
        write_stack(stack, out.claim("stack.xptv"), config.run.pixel_pitch_nm);
        out.record("stack", "stack.xptv");
        out.record("stack_index", "stack.xptv.json");
    });

    std::vector<std::pair<std::string, Volume>> recons;
    run_stage("approximant", manifest.stage_times, [&] {
        auto options = config.approximant;
        if (options.target_z == 0) options.target_z = ph.phase.dims().z;
        auto result = approx::approximant(stack, probe, plan, config.run, options);
        write_volume(result.volume, out.claim("approximant.xptv"));
        out.record("approximant", "approximant.xptv");
        std::string log;
        for (const auto& e : result.log) {
            log += nlohmann::json{{"n", e.angle_index}, {"iter", e.iteration}, {"loss", e.loss}}.dump() + "\n";
        }
        write_text(log, out.claim("loss.jsonl"));
        out.record("loss_log", "loss.jsonl");
        recons.emplace_back("approximant", std::move(result.volume));
    });

    run_stage("baselines", manifest.stage_times, [&] {
        if (config.tomo.methods.empty()) return;
        const auto sino = tomo::retrieve_projections(stack, probe, plan, config.run, config.tomo.retrieval);
        write_volume(sinogram_volume(sino), out.claim("projections.xptv"));
        out.record("projections", "projections.xptv");
        const auto& d = ph.phase.dims();
        for (const auto& method : config.tomo.methods) {
            Volume v;
            if (method == "gold") {
                tomo::GoldOptions g;
                g.sart_iterations = config.tomo.sart_iterations;
                g.retrieval = config.tomo.retrieval;
                Volume fine = tomo::gold_from_projections(sino, d.z, g);
                write_volume(fine, out.claim("gold.xptv"));
                out.record("gold", "gold.xptv");
                recons.emplace_back(method, tomo::bin2x(fine));
                continue;
            }
            v = tomo::reconstruct(method, sino, d,
                                  method == "sirt" ? config.tomo.sirt_iterations : config.tomo.sart_iterations);
            write_volume(v, out.claim(method + ".xptv"));
            out.record(method, method + ".xptv");
            recons.emplace_back(method, std::move(v));
        }
    });

    run_stage("metrics", manifest.stage_times, [&] {
        nlohmann::json report = nlohmann::json::object();
        for (const auto& [name, v] : recons) report[name] = metrics::to_json(metrics::evaluate(ph.phase, v));
        write_json(report, out.claim("metrics.json"));
        out.record("metrics", "metrics.json");
    });

    run_stage("analysis", manifest.stage_times, [&] {
        const double theta = config.scan.half_range_deg;
        nlohmann::json wedge = nlohmann::json::object();
        wedge["truth"] = analysis::wedge_energy(analysis::psd3d(ph.phase), theta).fraction();
        for (const auto& [name, v] : recons) wedge[name] = analysis::wedge_energy(analysis::psd3d(v), theta).fraction();
        write_json({{"half_range_deg", theta}, {"wedge_energy_fraction", wedge}}, out.claim("analysis.json"));
        out.record("analysis", "analysis.json");
        if (config.sweep) {
            const auto result = analysis::sweep(ph.phase, probe, config.run, *config.sweep);
            write_text(analysis::to_csv(result), out.claim("sweep.csv"));
            out.record("sweep_table", "sweep.csv");
            write_json(analysis::to_json(result), out.claim("sweep.json"));
            out.record("sweep_series", "sweep.json");
        }
    });

    manifest.artifacts = out.artifacts();
    write_json(to_json(manifest), manifest_path);
    log_event("pipeline_done", {{"artifacts", manifest.artifacts.size()}});
    return manifest;
}

}  // namespace xpt::pipeline
