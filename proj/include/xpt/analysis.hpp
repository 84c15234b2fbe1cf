#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xpt/approximant.hpp"
#include "xpt/config.hpp"
#include "xpt/optics.hpp"
#include "xpt/tomo.hpp"
#include "xpt/volume.hpp"

namespace xpt::analysis {

/// |unitary 3D DFT|^2 with the zero frequency moved to index n / 2 on every axis.
Volume psd3d(const Volume& v);

struct WedgeEnergy {
    double in_wedge = 0.0;
    double total = 0.0;
    [[nodiscard]] double fraction() const { return total > 0.0 ? in_wedge / total : 0.0; }
};

/// True when the centered bin (kz, kx) lies in the missing wedge of a +-theta tilt series
/// about y: atan2(|kz|, |kx|) > theta in physical frequency units. The kz = kx = 0 line is sampled.
bool in_missing_wedge(long kz, long kx, const Dims3& dims, const Pitch3& pitch, double theta_half_range_deg);

/// Spectral energy inside the missing wedge and over all bins, the 3D DC bin excluded.
WedgeEnergy wedge_energy(const Volume& psd, double theta_half_range_deg);

/// Smallest budget b such that every point from the densest budget down to b keeps
/// quality >= (1 - tolerance) * quality(densest). Points are (budget, quality).
double knee(std::vector<std::pair<double, double>> curve, double tolerance = 0.05);

enum class ProjectionSource { kRadon, kPtycho };

struct SweepOptions {
    std::vector<int> n_list{29, 15, 8, 4};
    std::vector<double> theta_list{70.0, 50.0, 30.0, 17.0, 10.0};
    std::vector<std::string> methods{"fbp", "sirt", "sart"};
    ProjectionSource source = ProjectionSource::kRadon;
    int sirt_iterations = 50;
    int sart_iterations = 10;
    tomo::RetrievalOptions retrieval{};  // thin-object front end of the ptycho source
    double overlap = 0.7;
    double tolerance = 0.05;
    approx::ApproximantOptions approximant{};
};

SweepOptions sweep_options_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SweepOptions& o);

struct SweepRow {
    int n = 0;
    double theta = 0.0;
    std::string method;
    double pcc = 0.0;
    double ms_ssim = 0.0;
    double dsc = 0.0;
    double ber = 0.0;
    double wall_time_s = 0.0;
};

struct KneePoint {
    std::string stage;  // "N" or "theta"
    std::string method;
    std::string metric;
    double value = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<KneePoint> knees;
    int chosen_n = 0;
    double chosen_theta = 0.0;
};

/// Two-stage operating-point search. Stage 1 fixes theta = max(theta_list) and walks n_list
/// descending; stage 2 fixes N at the rounded mean of the stage-1 knees and walks theta_list
/// descending. Each point: acquire projections, reconstruct per method, compare with `truth`.
SweepResult sweep(const Volume& truth, const optics::ProbeSet& probe, const RunConfig& config,
                  const SweepOptions& options);

/// CSV with header N,theta,method,pcc,ms_ssim,dsc,ber,wall_time_s.
std::string to_csv(const SweepResult& r);

/// Plot-ready series per metric plus knees and the chosen operating point.
nlohmann::json to_json(const SweepResult& r);

}  // namespace xpt::analysis
