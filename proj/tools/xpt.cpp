#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "xpt/analysis.hpp"
#include "xpt/approximant.hpp"
#include "xpt/error.hpp"
#include "xpt/io.hpp"
#include "xpt/log.hpp"
#include "xpt/metrics.hpp"
#include "xpt/parallel.hpp"
#include "xpt/phantom.hpp"
#include "xpt/pipeline.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/tomo.hpp"

namespace fs = std::filesystem;
using namespace xpt;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::optional<std::uint64_t> seed_from_env() {
    const char* raw = std::getenv("XPT_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(raw, &used, 0);
        if (used != std::string(raw).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw UsageError(std::string("XPT_SEED is not an unsigned integer: ") + raw);
    }
}

RunConfig load_run_config(const std::string& path) {
    RunConfig c = path.empty() ? RunConfig{} : run_config_from_json(read_json(path));
    if (auto s = seed_from_env()) c.seed = *s;
    return c;
}

void write_text(const std::string& text, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

tomo::Sinogram sinogram_from(const Volume& v, std::vector<double> angles) {
    if (angles.size() != v.dims().z) {
        throw DataError("sinogram holds " + std::to_string(v.dims().z) + " projections but " +
                        std::to_string(angles.size()) + " angles were given");
    }
    tomo::Sinogram s;
    s.angles_deg = std::move(angles);
    s.rows = v.dims().y;
    s.cols = v.dims().x;
    s.pitch_nm = v.pitch().x;
    s.data.assign(v.data().begin(), v.data().end());
    return s;
}

std::vector<double> angles_from_json(const nlohmann::json& j) {
    try {
        if (j.is_array()) return j.get<std::vector<double>>();
        return j.at("angles_deg").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("cannot read angles: ") + e.what());
    }
}

struct Common {
    int workers = 0;
    bool force = false;
    bool quiet = false;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ptycho-tomography simulation and reconstruction laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pipeline::kToolVersion);
    Common common;
    app.add_option("--workers", common.workers, "Cap on worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_flag("--force", common.force, "Allow overwriting existing outputs");
    app.add_flag("--quiet", common.quiet, "Suppress JSON-line logs on stderr");

    // phantom
    auto* ph = app.add_subcommand("phantom", "Generate a layered IC-like phantom");
    std::string ph_spec, ph_label, ph_phase;
    ph->add_option("--spec", ph_spec, "Phantom spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
    ph->add_option("--out-label", ph_label, "Output label volume (.xptv)")->required();
    ph->add_option("--out-phase", ph_phase, "Output phase volume (.xptv)")->required();

    // simulate
    auto* sm = app.add_subcommand("simulate", "Simulate mixed-state multi-slice diffraction patterns");
    std::string sm_phase, sm_plan, sm_config, sm_out, sm_probe, sm_probe_spec, sm_out_probe, sm_out_plan;
    int sm_angles = 29;
    double sm_range = 70.0, sm_overlap = 0.7;
    sm->add_option("--phase", sm_phase, "Phase volume (.xptv)")->required()->check(CLI::ExistingFile);
    sm->add_option("--plan", sm_plan, "Scan plan JSON; built from --angles/--half-range/--overlap when omitted")
        ->check(CLI::ExistingFile);
    sm->add_option("--config", sm_config, "Run config JSON")->check(CLI::ExistingFile);
    sm->add_option("--out", sm_out, "Output stack (.xptv, plus <out>.json index)")->required();
    sm->add_option("--probe", sm_probe, "Probe modes (.xptv); built from --probe-spec when omitted")
        ->check(CLI::ExistingFile);
    sm->add_option("--probe-spec", sm_probe_spec, "Probe settings JSON (waist_nm, power_decay, defocus_nm)")
        ->check(CLI::ExistingFile);
    sm->add_option("--out-probe", sm_out_probe, "Write the probe used (.xptv)");
    sm->add_option("--out-plan", sm_out_plan, "Write the scan plan used (JSON)");
    sm->add_option("--angles", sm_angles, "Number of tomo-scan angles N")->check(CLI::PositiveNumber);
    sm->add_option("--half-range", sm_range, "Angular half-range theta in degrees")->check(CLI::Range(0.0, 90.0));
    sm->add_option("--overlap", sm_overlap, "Ptychographic overlap in [0, 1)")->check(CLI::Range(0.0, 0.999999));

    // approximant
    auto* ap = app.add_subcommand("approximant", "Compute the Approximant volume from a diffraction stack");
    std::string ap_stack, ap_plan, ap_probe, ap_config, ap_out, ap_log;
    int ap_iters = 2;
    double ap_step = 0.0;
    std::size_t ap_target_z = 0;
    ap->add_option("--stack", ap_stack, "Diffraction stack (.xptv)")->required()->check(CLI::ExistingFile);
    ap->add_option("--plan", ap_plan, "Scan plan JSON")->required()->check(CLI::ExistingFile);
    ap->add_option("--probe", ap_probe, "Probe modes (.xptv)")->required()->check(CLI::ExistingFile);
    ap->add_option("--config", ap_config, "Run config JSON")->check(CLI::ExistingFile);
    ap->add_option("--out", ap_out, "Output volume (.xptv)")->required();
    ap->add_option("--log", ap_log, "Loss log (JSON lines: n, iter, loss)");
    ap->add_option("--iters", ap_iters, "Gradient iterations per angle")->check(CLI::NonNegativeNumber);
    ap->add_option("--step", ap_step, "Step size gamma (0 = 1 / slice_count)")->check(CLI::NonNegativeNumber);
    ap->add_option("--target-z", ap_target_z, "Output z voxels (0 = thickness / pitch)");

    // reconstruct
    auto* rc = app.add_subcommand("reconstruct", "Tomographic reconstruction (fbp, sirt, sart, gold)");
    std::string rc_method, rc_stack, rc_plan, rc_probe, rc_config, rc_sino, rc_angles, rc_out, rc_out_sino;
    int rc_iters = -1;
    std::size_t rc_depth = 0;
    int rc_retrieval = 50;
    rc->add_option("--method", rc_method, "Reconstruction method")
        ->required()
        ->check(CLI::IsMember({"fbp", "sirt", "sart", "gold"}));
    rc->add_option("--stack", rc_stack, "Diffraction stack (.xptv); projections are retrieved first")
        ->check(CLI::ExistingFile);
    rc->add_option("--plan", rc_plan, "Scan plan JSON (with --stack)")->check(CLI::ExistingFile);
    rc->add_option("--probe", rc_probe, "Probe modes (with --stack)")->check(CLI::ExistingFile);
    rc->add_option("--config", rc_config, "Run config JSON (with --stack)")->check(CLI::ExistingFile);
    rc->add_option("--sino", rc_sino, "Sinogram volume (angle, y, x) of line integrals")->check(CLI::ExistingFile);
    rc->add_option("--angles", rc_angles, "Angles JSON: plan file or plain list (with --sino)")->check(CLI::ExistingFile);
    rc->add_option("--iters", rc_iters, "Iterations for sirt/sart (defaults 50 / 10)");
    rc->add_option("--depth", rc_depth, "Output z voxels (0 = detector width, or thickness / pitch for gold)");
    rc->add_option("--retrieval-iters", rc_retrieval, "Thin-object retrieval iterations (with --stack)");
    rc->add_option("--out-sino", rc_out_sino, "Write the retrieved sinogram (with --stack)");
    rc->add_option("--out", rc_out, "Output volume (.xptv)")->required();

    // metrics
    auto* mt = app.add_subcommand("metrics", "Compare a reconstruction with a reference volume");
    std::string mt_ref, mt_test, mt_out;
    mt->add_option("--ref", mt_ref, "Reference phase volume")->required()->check(CLI::ExistingFile);
    mt->add_option("--test", mt_test, "Test volume")->required()->check(CLI::ExistingFile);
    mt->add_option("--out", mt_out, "Report JSON")->required();

    // psd
    auto* ps = app.add_subcommand("psd", "3D power spectral density and missing-wedge energy");
    std::string ps_in, ps_out, ps_report;
    double ps_theta = 90.0;
    ps->add_option("--in", ps_in, "Input volume")->required()->check(CLI::ExistingFile);
    ps->add_option("--out", ps_out, "Output PSD volume (.xptv)")->required();
    ps->add_option("--theta", ps_theta, "Tilt half-range in degrees for the wedge report")->check(CLI::Range(0.0, 90.0));
    ps->add_option("--report", ps_report, "Wedge energy report JSON");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Two-stage (N, theta) operating-point sweep");
    std::string sw_spec, sw_out, sw_json;
    sw->add_option("--spec", sw_spec, "Pipeline config JSON with a 'sweep' section")->required()->check(CLI::ExistingFile);
    sw->add_option("--out", sw_out, "Output CSV")->required();
    sw->add_option("--json", sw_json, "Plot-ready JSON (default <out>.json)");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "End-to-end run writing every artifact and a manifest");
    std::string pl_config, pl_dir;
    pl->add_option("--config", pl_config, "Pipeline config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    pl->add_option("--out-dir", pl_dir, "Output directory")->required();

    for (auto* sub : {ph, sm, ap, rc, mt, ps, sw, pl}) {
        sub->add_option("--workers", common.workers, "Cap on worker threads (0 = all cores)")
            ->check(CLI::NonNegativeNumber);
        sub->add_flag("--force", common.force, "Allow overwriting existing outputs");
        sub->add_flag("--quiet", common.quiet, "Suppress JSON-line logs on stderr");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        set_worker_count(common.workers);
        logging_enabled() = !common.quiet;
        const bool force = common.force;
        auto claim = [&](const std::string& path) {
            pipeline::guard_output(path, force);
            return fs::path(path);
        };

        if (ph->parsed()) {
            auto spec = ph_spec.empty() ? phantom::PhantomSpec{} : phantom::phantom_spec_from_json(read_json(ph_spec));
            if (auto s = seed_from_env()) spec.seed = *s;
            claim(ph_label);
            claim(ph_phase);
            const auto p = phantom::generate_phantom(spec);
            write_volume(p.label, ph_label, DType::kU8);
            write_volume(p.phase, ph_phase);
            log_event("phantom_written", {{"label", ph_label}, {"phase", ph_phase}});
        } else if (sm->parsed()) {
            const auto config = load_run_config(sm_config);
            const auto phase = read_volume(sm_phase);
            claim(sm_out);
            claim(sm_out + ".json");
            optics::ProbeSet probe;
            if (!sm_probe.empty()) {
                probe = optics::probe_from_weighted(read_complex_stack(sm_probe));
            } else {
                const auto settings = sm_probe_spec.empty() ? pipeline::ProbeSettings{}
                                                            : pipeline::probe_settings_from_json(read_json(sm_probe_spec));
                probe = pipeline::build_probe(config, settings);
            }
            scan::ScanPlan plan;
            if (!sm_plan.empty()) {
                plan = scan::scan_plan_from_json(read_json(sm_plan));
            } else {
                plan = pipeline::build_plan({sm_angles, sm_range, sm_overlap}, phase.dims(), config, probe);
            }
            if (!sm_out_probe.empty()) write_complex_stack(optics::weighted_modes(probe), claim(sm_out_probe));
            if (!sm_out_plan.empty()) write_json(scan::to_json(plan), claim(sm_out_plan));
            const auto stack = sim::simulate_stack(phase, probe, plan, config);
            sim::write_stack(stack, sm_out, config.pixel_pitch_nm);
            log_event("stack_written", {{"path", sm_out}, {"patterns", stack.pattern_count()}});
        } else if (ap->parsed()) {
            const auto config = load_run_config(ap_config);
            const auto plan = scan::scan_plan_from_json(read_json(ap_plan));
            const auto probe = optics::probe_from_weighted(read_complex_stack(ap_probe));
            const auto stack = sim::read_stack(ap_stack);
            claim(ap_out);
            if (!ap_log.empty()) claim(ap_log);
            approx::ApproximantOptions options;
            options.descent.iterations = ap_iters;
            options.descent.step = ap_step;
            options.target_z = ap_target_z;
            const auto result = approx::approximant(stack, probe, plan, config, options);
            write_volume(result.volume, ap_out);
            if (!ap_log.empty()) {
                std::string log;
                for (const auto& e : result.log) {
                    log += nlohmann::json{{"n", e.angle_index}, {"iter", e.iteration}, {"loss", e.loss}}.dump() + "\n";
                }
                write_text(log, ap_log);
            }
            log_event("approximant_written", {{"path", ap_out}});
        } else if (rc->parsed()) {
            if (rc_stack.empty() == rc_sino.empty()) throw UsageError("pass exactly one of --stack or --sino");
            claim(rc_out);
            tomo::Sinogram sino;
            RunConfig config;
            if (!rc_stack.empty()) {
                if (rc_plan.empty() || rc_probe.empty()) throw UsageError("--stack needs --plan and --probe");
                config = load_run_config(rc_config);
                const auto plan = scan::scan_plan_from_json(read_json(rc_plan));
                const auto probe = optics::probe_from_weighted(read_complex_stack(rc_probe));
                const auto stack = sim::read_stack(rc_stack);
                sino = tomo::retrieve_projections(stack, probe, plan, config, {.iterations = rc_retrieval});
                if (!rc_out_sino.empty()) {
                    write_volume(Volume({sino.angle_count(), sino.rows, sino.cols}, {1.0, sino.pitch_nm, sino.pitch_nm},
                                        VolumeKind::kPhase, sino.data),
                                 claim(rc_out_sino));
                }
            } else {
                if (rc_angles.empty()) throw UsageError("--sino needs --angles");
                sino = sinogram_from(read_volume(rc_sino), angles_from_json(read_json(rc_angles)));
            }
            Volume v;
            if (rc_method == "gold") {
                tomo::GoldOptions g;
                if (rc_iters >= 0) g.sart_iterations = rc_iters;
                std::size_t depth = rc_depth;
                if (depth == 0) {
                    depth = static_cast<std::size_t>(
                        std::max(1L, std::lround(config.slice_count * config.slice_spacing_nm / sino.pitch_nm)));
                }
                v = tomo::gold_from_projections(sino, depth, g);
            } else {
                const int iters = rc_iters >= 0 ? rc_iters : (rc_method == "sirt" ? 50 : 10);
                Dims3 dims = tomo::default_dims(sino);
                if (rc_depth > 0) dims.z = rc_depth;
                v = tomo::reconstruct(rc_method, sino, dims, iters);
            }
            write_volume(v, rc_out);
            log_event("reconstruction_written", {{"path", rc_out}, {"method", rc_method}});
        } else if (mt->parsed()) {
            claim(mt_out);
            const auto report = metrics::evaluate(read_volume(mt_ref), read_volume(mt_test));
            write_json(metrics::to_json(report), mt_out);
            log_event("metrics_written", {{"path", mt_out}, {"pcc", report.pcc}});
        } else if (ps->parsed()) {
            claim(ps_out);
            if (!ps_report.empty()) claim(ps_report);
            const auto psd = analysis::psd3d(read_volume(ps_in));
            write_volume(psd, ps_out, DType::kF64);
            if (!ps_report.empty()) {
                const auto e = analysis::wedge_energy(psd, ps_theta);
                write_json({{"theta_half_range_deg", ps_theta},
                            {"in_wedge", e.in_wedge},
                            {"total", e.total},
                            {"fraction", e.fraction()}},
                           ps_report);
            }
            log_event("psd_written", {{"path", ps_out}});
        } else if (sw->parsed()) {
            auto config = pipeline::pipeline_config_from_json(read_json(sw_spec));
            if (auto s = seed_from_env()) pipeline::override_seed(config, *s);
            if (!config.sweep) throw UsageError("sweep spec lacks a 'sweep' section");
            const std::string json_path = sw_json.empty() ? sw_out + ".json" : sw_json;
            claim(sw_out);
            claim(json_path);
            const auto ph_data = phantom::generate_phantom(config.phantom);
            const auto probe = pipeline::build_probe(config.run, config.probe);
            const auto result = analysis::sweep(ph_data.phase, probe, config.run, *config.sweep);
            write_text(analysis::to_csv(result), sw_out);
            write_json(analysis::to_json(result), json_path);
            log_event("sweep_written", {{"csv", sw_out}, {"rows", result.rows.size()}});
        } else if (pl->parsed()) {
            auto config = pl_config.empty() ? pipeline::PipelineConfig{}
                                            : pipeline::pipeline_config_from_json(read_json(pl_config));
            if (auto s = seed_from_env()) pipeline::override_seed(config, *s);
            pipeline::run_pipeline(config, pl_dir, force);
        }
        return 0;
    } catch (const UsageError& e) {
        log_event("error", {{"kind", "usage"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericalError& e) {
        log_event("error", {{"kind", "numerical"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        log_event("error", {{"kind", "internal"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
