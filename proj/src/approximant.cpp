#include "xpt/approximant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/parallel.hpp"
#include "xpt/phantom.hpp"

namespace xpt::approx {

AngleObjective::AngleObjective(const sim::DiffractionStack& stack, std::size_t angle_index,
                               const scan::ScanPlan& plan, const optics::ProbeSet& probe, const RunConfig& config,
                               LossModel model)
    : stack_(stack),
      n_(angle_index),
      plan_(plan),
      modes_(optics::weighted_modes(probe)),
      prop_(probe.rows(), probe.cols(), probe.pitch(), config.slice_spacing_nm, config.wavelength_nm),
      model_(model),
      rows_(plan.plane_rows),
      cols_(plan.plane_cols),
      window_(static_cast<std::size_t>(plan.window_px)) {
    if (angle_index >= stack.angle_count()) throw UsageError("angle index out of range");
    if (probe.rows() != window_ || probe.cols() != window_) throw UsageError("probe grid differs from the plan's window");
    if (stack.rows() != window_ || stack.cols() != window_) throw DataError("detector grid differs from the plan's window");
    if (stack.position_count(n_) != plan.positions.at(n_).size()) throw DataError("stack and plan disagree on positions");
    for (std::size_t j = 0; j < stack.position_count(n_); ++j) {
        for (double v : stack.pattern(n_, j)) {
            if (v < 0.0 || !std::isfinite(v)) throw DataError("measured intensity is negative or non-finite");
        }
    }
}

void AngleObjective::check_slices(std::span<const ComplexField2D> slices) const {
    if (slices.empty()) throw UsageError("object estimate has no slices");
    for (const auto& s : slices) {
        if (s.rows() != rows_ || s.cols() != cols_) throw UsageError("object slice does not match the plan's object plane");
    }
}

namespace {

// Fourier-domain amplitude mismatch for one position. Fills chi (Fourier domain) and returns the loss term.
double residuals(std::vector<ComplexField2D>& far, std::span<const double> measured, LossModel model) {
    double loss = 0.0;
    const std::size_t size = measured.size();
    if (model == LossModel::kIncoherentSum) {
        for (std::size_t q = 0; q < size; ++q) {
            double total = 0.0;
            for (const auto& f : far) total += std::norm(f[q]);
            const double model_amp = std::sqrt(total);
            const double meas_amp = std::sqrt(measured[q]);
            loss += (model_amp - meas_amp) * (model_amp - meas_amp);
            const double ratio = 1.0 - meas_amp / std::max(model_amp, kAmplitudeFloor);
            for (auto& f : far) f[q] *= ratio;
        }
    } else {
        for (auto& f : far) {
            for (std::size_t q = 0; q < size; ++q) {
                const double model_amp = std::abs(f[q]);
                const double meas_amp = std::sqrt(measured[q]);
                loss += (model_amp - meas_amp) * (model_amp - meas_amp);
                f[q] *= 1.0 - meas_amp / std::max(model_amp, kAmplitudeFloor);
            }
        }
    }
    return loss;
}

}  // namespace

double AngleObjective::loss(std::span<const ComplexField2D> slices) const {
    check_slices(slices);
    double total = 0.0;
    for (std::size_t j = 0; j < stack_.position_count(n_); ++j) {
        const auto window = sim::extract_window(slices, plan_.window_origin(n_, j), window_, window_);
        std::vector<ComplexField2D> far;
        for (const auto& mode : modes_) {
            far.push_back(sim::forward_exit_wave(mode, window, prop_).exit);
            fft::forward2d(far.back());
        }
        total += residuals(far, stack_.pattern(n_, j), model_);
    }
    return total;
}

LossState AngleObjective::gradients(std::span<const ComplexField2D> slices, bool keep_wavefields) const {
    check_slices(slices);
    const std::size_t nslices = slices.size();
    const std::size_t nmodes = modes_.size();
    const double pitch = slices.front().pitch();
    LossState st;
    st.object_gradient.assign(nslices, ComplexField2D(rows_, cols_, pitch));
    st.illumination.assign(nslices, RealField2D(rows_, cols_, pitch));
    st.probe_gradient.assign(nmodes, ComplexField2D(window_, window_, pitch));
    std::vector<ComplexField2D> local(nslices, ComplexField2D(window_, window_, pitch));  // dL/dO*, window frame

    for (std::size_t j = 0; j < stack_.position_count(n_); ++j) {
        const auto origin = plan_.window_origin(n_, j);
        const auto window = sim::extract_window(slices, origin, window_, window_);
        std::vector<sim::Wavefront> waves;
        std::vector<ComplexField2D> chi;
        for (const auto& mode : modes_) {
            waves.push_back(sim::forward_exit_wave(mode, window, prop_));
            chi.push_back(waves.back().exit);
            fft::forward2d(chi.back());
        }
        st.loss += residuals(chi, stack_.pattern(n_, j), model_);

        for (auto& f : local)
            for (auto& v : f.data()) v = {};
        std::vector<std::vector<ComplexField2D>> wave_grads(nmodes);
        for (std::size_t m = 0; m < nmodes; ++m) {
            fft::inverse2d(chi[m]);
            const auto& incident = waves[m].incident;
            // g holds dL/dP^[l]* while walking back through the slices.
            ComplexField2D g(window_, window_, pitch);
            ComplexField2D carry = chi[m];  // dL/d(O^[l] P^[l])*
            std::vector<ComplexField2D> per_slice(nslices);
            for (std::size_t l = nslices; l-- > 0;) {
                if (l + 1 < nslices) prop_.backward_inplace(carry);
                for (std::size_t i = 0; i < carry.size(); ++i) {
                    local[l][i] += std::conj(incident[l][i]) * carry[i];
                    g[i] = std::conj(window[l][i]) * carry[i];
                }
                if (keep_wavefields) {
                    per_slice[l] = g;
                    for (auto& v : per_slice[l].data()) v = std::conj(v);
                }
                carry = g;
            }
            for (std::size_t i = 0; i < g.size(); ++i) st.probe_gradient[m][i] += std::conj(g[i]);
            if (keep_wavefields) wave_grads[m] = std::move(per_slice);
        }
        if (keep_wavefields) {
            st.wavefield_gradient.push_back(std::move(wave_grads));
            st.residual.push_back(std::move(chi));
        }

        for (std::size_t l = 0; l < nslices; ++l) {
            for (std::size_t r = 0; r < window_; ++r) {
                const long pr = origin.row + static_cast<long>(r);
                if (pr < 0 || pr >= static_cast<long>(rows_)) continue;
                for (std::size_t c = 0; c < window_; ++c) {
                    const long pc = origin.col + static_cast<long>(c);
                    if (pc < 0 || pc >= static_cast<long>(cols_)) continue;
                    const auto ur = static_cast<std::size_t>(pr);
                    const auto uc = static_cast<std::size_t>(pc);
                    st.object_gradient[l](ur, uc) += std::conj(local[l](r, c));
                    double lit = 0.0;
                    for (const auto& w : waves) lit += std::norm(w.incident[l](r, c));
                    st.illumination[l](ur, uc) += lit;
                }
            }
        }
    }
    return st;
}

std::vector<ComplexField2D> unit_slices(std::size_t count, std::size_t rows, std::size_t cols, double pitch_nm) {
    return std::vector<ComplexField2D>(count, ComplexField2D(rows, cols, pitch_nm, cdouble{1.0, 0.0}));
}

void apply_step(std::vector<ComplexField2D>& slices, const LossState& state, const DescentOptions& options) {
    for (std::size_t l = 0; l < slices.size(); ++l) {
        const auto lit = state.illumination[l].data();
        const double norm = *std::max_element(lit.begin(), lit.end()) + options.epsilon;
        const double gamma = options.step > 0.0 ? options.step : 1.0 / static_cast<double>(slices.size());
        const double scale = gamma / norm;
        for (std::size_t i = 0; i < slices[l].size(); ++i) {
            slices[l][i] -= scale * std::conj(state.object_gradient[l][i]);
        }
    }
}

AngleEstimate retrieve_angle(const sim::DiffractionStack& stack, std::size_t n, const scan::ScanPlan& plan,
                             const optics::ProbeSet& probe, const RunConfig& config, const DescentOptions& options) {
    if (options.iterations < 0) throw UsageError("iteration count must be >= 0");
    const AngleObjective objective(stack, n, plan, probe, config, options.model);
    AngleEstimate est;
    est.slices = unit_slices(static_cast<std::size_t>(config.slice_count), plan.plane_rows, plan.plane_cols,
                             plan.pixel_pitch_nm);
    std::vector<ComplexField2D> velocity(est.slices.size(),
                                         ComplexField2D(plan.plane_rows, plan.plane_cols, plan.pixel_pitch_nm));
    for (int it = 0; it < options.iterations; ++it) {
        const auto state = objective.gradients(est.slices, false);
        est.loss_history.push_back(state.loss);
        if (options.momentum <= 0.0) {
            apply_step(est.slices, state, options);
            continue;
        }
        auto stepped = est.slices;
        apply_step(stepped, state, options);
        for (std::size_t l = 0; l < stepped.size(); ++l) {
            for (std::size_t i = 0; i < stepped[l].size(); ++i) {
                velocity[l][i] = options.momentum * velocity[l][i] + (stepped[l][i] - est.slices[l][i]);
                est.slices[l][i] += velocity[l][i];
            }
        }
    }
    est.loss_history.push_back(objective.loss(est.slices));
    for (double v : est.loss_history) {
        if (!std::isfinite(v)) throw NumericalError("loss diverged at angle " + std::to_string(n));
    }
    return est;
}

Volume dilate_slices(std::span<const RealField2D> slice_phases, std::size_t target_z, double thickness_nm) {
    if (slice_phases.empty()) throw UsageError("no slices to dilate");
    if (target_z < slice_phases.size()) throw UsageError("target z-count is smaller than the slice count");
    const auto& first = slice_phases.front();
    const Dims3 dims{target_z, first.rows(), first.cols()};
    Volume v(dims, {thickness_nm / static_cast<double>(target_z), first.pitch(), first.pitch()}, VolumeKind::kPhase);
    const auto edges = phantom::band_edges(target_z, slice_phases.size());
    for (std::size_t l = 0; l < slice_phases.size(); ++l) {
        const double share = 1.0 / static_cast<double>(edges[l + 1] - edges[l]);
        for (std::size_t z = edges[l]; z < edges[l + 1]; ++z)
            for (std::size_t y = 0; y < dims.y; ++y)
                for (std::size_t x = 0; x < dims.x; ++x) v(z, y, x) = slice_phases[l](y, x) * share;
    }
    return v;
}

ApproximantResult approximant(const sim::DiffractionStack& stack, const optics::ProbeSet& probe,
                              const scan::ScanPlan& plan, const RunConfig& config, const ApproximantOptions& options) {
    config.validate();
    if (stack.angle_count() == 0) throw UsageError("stack holds no tomo-scans");
    const double thickness = config.slice_spacing_nm * config.slice_count;
    const std::size_t target_z =
        options.target_z > 0 ? options.target_z
                             : static_cast<std::size_t>(std::max(1L, std::lround(thickness / plan.pixel_pitch_nm)));

    ApproximantResult result;
    const std::size_t count = stack.angle_count();
    // Angles are solved in parallel blocks; the running sum is folded in ascending n.
    const std::size_t block = std::max<std::size_t>(1, 2 * static_cast<std::size_t>(worker_count()));
    std::vector<double> sum;
    for (std::size_t start = 0; start < count; start += block) {
        const std::size_t stop = std::min(count, start + block);
        std::vector<AngleEstimate> estimates(stop - start);
        std::vector<Volume> rotated(stop - start);
        std::vector<std::vector<RealField2D>> phases(stop - start);
        parallel_for(stop - start, [&](std::size_t k) {
            const std::size_t n = start + k;
            estimates[k] = retrieve_angle(stack, n, plan, probe, config, options.descent);
            double mean = 0.0;
            std::size_t total = 0;
            for (const auto& s : estimates[k].slices) {
                RealField2D ph(s.rows(), s.cols(), s.pitch());
                for (std::size_t i = 0; i < s.size(); ++i) ph[i] = std::arg(s[i]);
                for (double v : ph.data()) mean += v;
                total += ph.size();
                phases[k].push_back(std::move(ph));
            }
            mean /= static_cast<double>(total);
            for (auto& ph : phases[k])
                for (auto& v : ph.data()) v -= mean;
            const Volume dilated = dilate_slices(phases[k], target_z, thickness);
            rotated[k] = plan.angles_deg[n] == 0.0 ? dilated : scan::rotate_volume(dilated, -plan.angles_deg[n]);
        });
        for (std::size_t k = 0; k < stop - start; ++k) {
            const auto data = rotated[k].data();
            if (sum.empty()) {
                sum.assign(data.begin(), data.end());
                result.volume = rotated[k];
            } else {
                for (std::size_t i = 0; i < data.size(); ++i) sum[i] += data[i];
            }
            for (std::size_t it = 0; it < estimates[k].loss_history.size(); ++it) {
                result.log.push_back({start + k, static_cast<int>(it), estimates[k].loss_history[it]});
            }
            if (options.keep_per_angle) result.per_angle.push_back(std::move(phases[k]));
        }
    }
    auto out = result.volume.data();
    for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] / static_cast<double>(count);
    result.volume.set_kind(VolumeKind::kPhase);
    return result;
}

}  // namespace xpt::approx
