#include "xpt/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/metrics.hpp"
#include "xpt/parallel.hpp"
#include "xpt/ptychosim.hpp"
#include "xpt/scanplan.hpp"
#include "xpt/tomo.hpp"

namespace xpt::analysis {

Volume psd3d(const Volume& v) {
    const auto& d = v.dims();
    std::vector<cdouble> spectrum(v.data().begin(), v.data().end());
    fft::forward3d(spectrum, d);
    Volume out(d, v.pitch(), VolumeKind::kPsd);
    for (std::size_t z = 0; z < d.z; ++z) {
        const std::size_t cz = static_cast<std::size_t>(fft::freq_index(z, d.z) + static_cast<long>(d.z / 2));
        for (std::size_t y = 0; y < d.y; ++y) {
            const std::size_t cy = static_cast<std::size_t>(fft::freq_index(y, d.y) + static_cast<long>(d.y / 2));
            for (std::size_t x = 0; x < d.x; ++x) {
                const std::size_t cx = static_cast<std::size_t>(fft::freq_index(x, d.x) + static_cast<long>(d.x / 2));
                out(cz, cy, cx) = std::norm(spectrum[d.index(z, y, x)]);
            }
        }
    }
    return out;
}

bool in_missing_wedge(long kz, long kx, const Dims3& dims, const Pitch3& pitch, double theta_half_range_deg) {
    if (kz == 0 && kx == 0) return false;
    const double fz = std::abs(static_cast<double>(kz)) / (static_cast<double>(dims.z) * pitch.z);
    const double fx = std::abs(static_cast<double>(kx)) / (static_cast<double>(dims.x) * pitch.x);
    return std::atan2(fz, fx) > theta_half_range_deg * std::numbers::pi / 180.0;
}

WedgeEnergy wedge_energy(const Volume& psd, double theta_half_range_deg) {
    if (psd.kind() != VolumeKind::kPsd) throw UsageError("wedge_energy expects a PSD volume");
    const auto& d = psd.dims();
    const long hz = static_cast<long>(d.z / 2);
    const long hy = static_cast<long>(d.y / 2);
    const long hx = static_cast<long>(d.x / 2);
    WedgeEnergy e;
    for (std::size_t z = 0; z < d.z; ++z) {
        const long kz = static_cast<long>(z) - hz;
        for (std::size_t x = 0; x < d.x; ++x) {
            const long kx = static_cast<long>(x) - hx;
            const bool wedge = in_missing_wedge(kz, kx, d, psd.pitch(), theta_half_range_deg);
            for (std::size_t y = 0; y < d.y; ++y) {
                if (kz == 0 && kx == 0 && static_cast<long>(y) == hy) continue;
                const double p = psd(z, y, x);
                e.total += p;
                if (wedge) e.in_wedge += p;
            }
        }
    }
    return e;
}

double knee(std::vector<std::pair<double, double>> curve, double tolerance) {
    if (curve.empty()) throw UsageError("knee of an empty curve");
    std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double floor = (1.0 - tolerance) * curve.front().second;
    double best = curve.front().first;
    for (const auto& [budget, quality] : curve) {
        if (!(quality >= floor)) break;
        best = budget;
    }
    return best;
}

SweepOptions sweep_options_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"n_list", "theta_list", "methods", "source", "sirt_iterations", "sart_iterations",
                         "retrieval_iterations", "retrieval_momentum", "ramp_border_px", "overlap", "tolerance", "approximant_iterations",
                         "approximant_step"},
                        "sweep");
    SweepOptions o;
    o.n_list = json_get_or(j, "n_list", o.n_list);
    o.theta_list = json_get_or(j, "theta_list", o.theta_list);
    o.methods = json_get_or(j, "methods", o.methods);
    const auto source = json_get_or<std::string>(j, "source", "radon");
    if (source == "radon") {
        o.source = ProjectionSource::kRadon;
    } else if (source == "ptycho") {
        o.source = ProjectionSource::kPtycho;
    } else {
        throw UsageError("sweep source must be 'radon' or 'ptycho'");
    }
    o.sirt_iterations = json_get_or(j, "sirt_iterations", o.sirt_iterations);
    o.sart_iterations = json_get_or(j, "sart_iterations", o.sart_iterations);
    o.retrieval.iterations = json_get_or(j, "retrieval_iterations", o.retrieval.iterations);
    o.retrieval.momentum = json_get_or(j, "retrieval_momentum", o.retrieval.momentum);
    o.retrieval.ramp_border_px = json_get_or(j, "ramp_border_px", o.retrieval.ramp_border_px);
    o.overlap = json_get_or(j, "overlap", o.overlap);
    o.tolerance = json_get_or(j, "tolerance", o.tolerance);
    o.approximant.descent.iterations = json_get_or(j, "approximant_iterations", o.approximant.descent.iterations);
    o.approximant.descent.step = json_get_or(j, "approximant_step", o.approximant.descent.step);
    return o;
}

nlohmann::json to_json(const SweepOptions& o) {
    return {{"n_list", o.n_list},
            {"theta_list", o.theta_list},
            {"methods", o.methods},
            {"source", o.source == ProjectionSource::kRadon ? "radon" : "ptycho"},
            {"sirt_iterations", o.sirt_iterations},
            {"sart_iterations", o.sart_iterations},
            {"retrieval_iterations", o.retrieval.iterations},
            {"retrieval_momentum", o.retrieval.momentum},
            {"ramp_border_px", o.retrieval.ramp_border_px},
            {"overlap", o.overlap},
            {"tolerance", o.tolerance},
            {"approximant_iterations", o.approximant.descent.iterations},
            {"approximant_step", o.approximant.descent.step}};
}

namespace {

const std::vector<std::string> kMetricNames{"pcc", "ms_ssim", "dsc", "ber"};

double quality(const SweepRow& r, const std::string& metric) {
    if (metric == "pcc") return r.pcc;
    if (metric == "ms_ssim") return r.ms_ssim;
    if (metric == "dsc") return r.dsc;
    return 1.0 - r.ber;
}

void validate(const SweepOptions& o) {
    if (o.n_list.empty() || o.theta_list.empty() || o.methods.empty()) {
        throw UsageError("sweep needs non-empty n_list, theta_list and methods");
    }
    for (int n : o.n_list) {
        if (n < 2) throw UsageError("sweep angle counts must be >= 2");
    }
    for (double t : o.theta_list) {
        if (!(t > 0.0 && t <= 90.0)) throw UsageError("sweep half-ranges must lie in (0, 90]");
    }
    for (const auto& m : o.methods) {
        const bool baseline = m == "fbp" || m == "sirt" || m == "sart";
        const bool ptycho_only = m == "approximant" || m == "gold";
        if (!baseline && !ptycho_only) throw UsageError("unknown sweep method '" + m + "'");
        if (ptycho_only && o.source != ProjectionSource::kPtycho) {
            throw UsageError("method '" + m + "' needs the ptycho projection source");
        }
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<SweepRow> run_point(const Volume& truth, const optics::ProbeSet& probe, const RunConfig& config,
                                const SweepOptions& o, int n, double theta) {
    const auto angles = scan::make_angles(n, theta);
    const auto& d = truth.dims();
    std::vector<SweepRow> rows;

    tomo::Sinogram sino;
    sim::DiffractionStack stack;
    scan::ScanPlan plan;
    double acquire_s = 0.0;
    const auto t_acq = std::chrono::steady_clock::now();
    if (o.source == ProjectionSource::kRadon) {
        sino = tomo::radon(truth, angles);
    } else {
        plan = scan::make_scan_plan(angles, d.y, d.x, truth.pitch().x, probe.footprint_nm(), o.overlap,
                                    static_cast<int>(probe.rows()));
        stack = sim::simulate_stack(truth, probe, plan, config);
        const bool needs_projections = std::any_of(o.methods.begin(), o.methods.end(),
                                                   [](const std::string& m) { return m != "approximant"; });
        if (needs_projections) {
            sino = tomo::retrieve_projections(stack, probe, plan, config, o.retrieval);
        }
    }
    acquire_s = seconds_since(t_acq);

    for (const auto& method : o.methods) {
        const auto t0 = std::chrono::steady_clock::now();
        Volume recon;
        if (method == "approximant") {
            auto options = o.approximant;
            options.target_z = d.z;
            recon = approx::approximant(stack, probe, plan, config, options).volume;
        } else if (method == "gold") {
            tomo::GoldOptions g;
            g.sart_iterations = o.sart_iterations;
            recon = tomo::bin2x(tomo::gold_from_projections(sino, d.z, g));
        } else {
            recon = tomo::reconstruct(method, sino, d, method == "sirt" ? o.sirt_iterations : o.sart_iterations);
        }
        const auto report = metrics::evaluate(truth, recon);
        SweepRow row{n, theta, method, report.pcc, report.ms_ssim, report.dsc, report.ber, 0.0};
        row.wall_time_s = seconds_since(t0) + (method == "approximant" ? 0.0 : acquire_s);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<KneePoint> stage_knees(const std::vector<SweepRow>& rows, const SweepOptions& o, bool over_n,
                                   int fixed_n, double fixed_theta) {
    std::vector<KneePoint> out;
    for (const auto& method : o.methods) {
        for (const auto& metric : kMetricNames) {
            std::vector<std::pair<double, double>> curve;
            for (const auto& r : rows) {
                if (r.method != method) continue;
                if (over_n && r.theta != fixed_theta) continue;
                if (!over_n && r.n != fixed_n) continue;
                curve.emplace_back(over_n ? r.n : r.theta, quality(r, metric));
            }
            if (curve.empty()) continue;
            out.push_back({over_n ? "N" : "theta", method, metric, knee(curve, o.tolerance)});
        }
    }
    return out;
}

double mean_value(const std::vector<KneePoint>& knees) {
    double s = 0.0;
    for (const auto& k : knees) s += k.value;
    return s / static_cast<double>(knees.size());
}

}  // namespace

SweepResult sweep(const Volume& truth, const optics::ProbeSet& probe, const RunConfig& config,
                  const SweepOptions& options) {
    validate(options);
    SweepResult result;

    std::vector<int> ns = options.n_list;
    std::sort(ns.begin(), ns.end(), std::greater<>());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    std::vector<double> thetas = options.theta_list;
    std::sort(thetas.begin(), thetas.end(), std::greater<>());
    thetas.erase(std::unique(thetas.begin(), thetas.end()), thetas.end());
    const double theta_max = thetas.front();

    auto run_stage = [&](const std::vector<std::pair<int, double>>& points) {
        std::vector<std::vector<SweepRow>> per_point(points.size());
        parallel_for(points.size(), [&](std::size_t i) {
            per_point[i] = run_point(truth, probe, config, options, points[i].first, points[i].second);
        });
        for (auto& rows : per_point) {
            for (auto& r : rows) result.rows.push_back(std::move(r));
        }
    };

    std::vector<std::pair<int, double>> stage1;
    for (int n : ns) stage1.emplace_back(n, theta_max);
    run_stage(stage1);
    const auto knees_n = stage_knees(result.rows, options, true, 0, theta_max);
    result.chosen_n = static_cast<int>(std::lround(mean_value(knees_n)));

    std::vector<std::pair<int, double>> stage2;
    for (double t : thetas) {
        const bool seen = std::any_of(result.rows.begin(), result.rows.end(),
                                      [&](const SweepRow& r) { return r.n == result.chosen_n && r.theta == t; });
        if (!seen) stage2.emplace_back(result.chosen_n, t);
    }
    run_stage(stage2);
    const auto knees_theta = stage_knees(result.rows, options, false, result.chosen_n, 0.0);
    result.chosen_theta = mean_value(knees_theta);

    result.knees = knees_n;
    result.knees.insert(result.knees.end(), knees_theta.begin(), knees_theta.end());
    return result;
}

std::string to_csv(const SweepResult& r) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "N,theta,method,pcc,ms_ssim,dsc,ber,wall_time_s\n";
    for (const auto& row : r.rows) {
        out << row.n << ',' << row.theta << ',' << row.method << ',' << row.pcc << ',' << row.ms_ssim << ','
            << row.dsc << ',' << row.ber << ',' << row.wall_time_s << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const SweepResult& r) {
    nlohmann::json series = nlohmann::json::object();
    for (const auto& metric : kMetricNames) {
        nlohmann::json per_method = nlohmann::json::object();
        for (const auto& row : r.rows) {
            const double value = metric == "pcc" ? row.pcc : metric == "ms_ssim" ? row.ms_ssim : metric == "dsc" ? row.dsc : row.ber;
            per_method[row.method].push_back({{"N", row.n}, {"theta", row.theta}, {"value", value}});
        }
        series[metric] = std::move(per_method);
    }
    nlohmann::json knees = nlohmann::json::array();
    for (const auto& k : r.knees) {
        knees.push_back({{"stage", k.stage}, {"method", k.method}, {"metric", k.metric}, {"value", k.value}});
    }
    return {{"series", series}, {"knees", knees}, {"chosen", {{"N", r.chosen_n}, {"theta", r.chosen_theta}}}};
}

}  // namespace xpt::analysis
