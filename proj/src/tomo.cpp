#include "xpt/tomo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xpt/approximant.hpp"
#include "xpt/error.hpp"
#include "xpt/fft.hpp"
#include "xpt/parallel.hpp"

namespace xpt::tomo {

Projector::Projector(const Dims3& dims, const Pitch3& pitch, std::span<const double> angles_deg)
    : dims_(dims), pitch_(pitch), angles_(angles_deg.begin(), angles_deg.end()) {
    if (angles_.empty()) throw UsageError("projection needs at least one angle");
    rays_.resize(angles_.size());
    parallel_for(angles_.size(), [&](std::size_t n) {
        const auto table = scan::make_rotation_table(dims, pitch, angles_[n]);
        auto& rays = rays_[n];
        rays.assign(dims.x, {});
        for (std::size_t xl = 0; xl < dims.x; ++xl) {
            auto& ray = rays[xl];
            for (std::size_t zl = 0; zl < dims.z; ++zl) {
                const auto& idx = table.index[zl * dims.x + xl];
                const auto& w = table.weight[zl * dims.x + xl];
                for (int k = 0; k < 4; ++k) {
                    if (idx[k] >= 0) ray.push_back({static_cast<std::size_t>(idx[k]), w[k] * pitch.z});
                }
            }
            std::sort(ray.begin(), ray.end(), [](const Entry& a, const Entry& b) { return a.zx < b.zx; });
            std::vector<Entry> merged;
            for (const auto& e : ray) {
                if (!merged.empty() && merged.back().zx == e.zx) {
                    merged.back().weight += e.weight;
                } else {
                    merged.push_back(e);
                }
            }
            ray = std::move(merged);
        }
    });
}

void Projector::forward_angle(std::size_t n, std::span<const double> volume, std::span<double> projection) const {
    const std::size_t ny = dims_.y;
    const std::size_t nx = dims_.x;
    for (std::size_t xl = 0; xl < nx; ++xl) {
        for (std::size_t y = 0; y < ny; ++y) projection[y * nx + xl] = 0.0;
        for (const auto& e : rays_[n][xl]) {
            const std::size_t z = e.zx / nx;
            const std::size_t x = e.zx % nx;
            const double* src = volume.data() + z * ny * nx + x;
            for (std::size_t y = 0; y < ny; ++y) projection[y * nx + xl] += e.weight * src[y * nx];
        }
    }
}

void Projector::backward_angle(std::size_t n, std::span<const double> projection, std::span<double> volume) const {
    const std::size_t ny = dims_.y;
    const std::size_t nx = dims_.x;
    for (std::size_t xl = 0; xl < nx; ++xl) {
        for (const auto& e : rays_[n][xl]) {
            const std::size_t z = e.zx / nx;
            const std::size_t x = e.zx % nx;
            double* dst = volume.data() + z * ny * nx + x;
            for (std::size_t y = 0; y < ny; ++y) dst[y * nx] += e.weight * projection[y * nx + xl];
        }
    }
}

Sinogram Projector::forward(const Volume& v) const {
    if (v.dims() != dims_) throw UsageError("volume dims differ from the projector's");
    Sinogram s;
    s.angles_deg = angles_;
    s.rows = dims_.y;
    s.cols = dims_.x;
    s.pitch_nm = pitch_.x;
    s.data.assign(angles_.size() * dims_.y * dims_.x, 0.0);
    parallel_for(angles_.size(), [&](std::size_t n) {
        forward_angle(n, v.data(), std::span<double>(s.data).subspan(n * s.rows * s.cols, s.rows * s.cols));
    });
    return s;
}

Volume Projector::backward(const Sinogram& s) const {
    if (s.angle_count() != angles_.size() || s.rows != dims_.y || s.cols != dims_.x) {
        throw UsageError("sinogram shape differs from the projector's");
    }
    Volume out(dims_, pitch_, VolumeKind::kPhase);
    // Angles accumulate in ascending order so the sum is reproducible.
    for (std::size_t n = 0; n < angles_.size(); ++n) backward_angle(n, s.projection(n), out.data());
    return out;
}

Sinogram radon(const Volume& v, std::span<const double> angles_deg) {
    return Projector(v.dims(), v.pitch(), angles_deg).forward(v);
}

Volume backproject(const Sinogram& s, const Dims3& dims, const Pitch3& pitch) {
    if (dims.y != s.rows || dims.x != s.cols) {
        throw UsageError("volume dims (" + std::to_string(dims.y) + ", " + std::to_string(dims.x) +
                         ") do not match the sinogram's detector (" + std::to_string(s.rows) + ", " +
                         std::to_string(s.cols) + ")");
    }
    return Projector(dims, pitch, s.angles_deg).backward(s);
}

Dims3 default_dims(const Sinogram& s) { return {s.cols, s.rows, s.cols}; }

namespace {

Pitch3 iso(double p) { return {p, p, p}; }

void check_sinogram(const Sinogram& s, const Dims3& dims) {
    if (s.angle_count() == 0) throw UsageError("sinogram holds no projections");
    if (s.data.size() != s.angle_count() * s.rows * s.cols) throw DataError("sinogram payload size mismatch");
    if (dims.y != s.rows || dims.x != s.cols) throw UsageError("volume dims do not match the sinogram's detector");
    for (double v : s.data) {
        if (!std::isfinite(v)) throw DataError("sinogram holds a non-finite value");
    }
}

double residual_norm(const Projector& proj, const Sinogram& s, std::span<const double> x, std::vector<double>& scratch) {
    const std::size_t plane = s.rows * s.cols;
    double total = 0.0;
    for (std::size_t n = 0; n < s.angle_count(); ++n) {
        proj.forward_angle(n, x, scratch);
        const auto b = s.projection(n);
        for (std::size_t i = 0; i < plane; ++i) total += (b[i] - scratch[i]) * (b[i] - scratch[i]);
    }
    return std::sqrt(total);
}

}  // namespace

Volume fbp(const Sinogram& s, const Dims3& dims) {
    check_sinogram(s, dims);
    if (s.angle_count() < 2) throw UsageError("FBP needs at least two angles");
    const std::size_t n = s.cols;
    std::size_t padded = 1;
    while (padded < 2 * n) padded *= 2;
    const double tau = s.pitch_nm;

    // Band-limited ramp: h[0] = 1/(4 tau^2), h[k odd] = -1/(k pi tau)^2, h[k even] = 0.
    std::vector<cdouble> kernel(padded);
    for (std::size_t k = 0; k < padded; ++k) {
        const long f = fft::freq_index(k, padded);
        if (f == 0) {
            kernel[k] = 1.0 / (4.0 * tau * tau);
        } else if (f % 2 != 0) {
            kernel[k] = -1.0 / std::pow(static_cast<double>(f) * std::numbers::pi * tau, 2);
        }
    }
    fft::forward1d(kernel);
    // Unitary transforms: convolution theorem picks up sqrt(N); tau is the quadrature weight.
    const double conv_scale = std::sqrt(static_cast<double>(padded)) * tau;

    Sinogram filtered = s;
    parallel_for(s.angle_count(), [&](std::size_t a) {
        std::vector<cdouble> row(padded);
        for (std::size_t y = 0; y < s.rows; ++y) {
            std::fill(row.begin(), row.end(), cdouble{});
            for (std::size_t x = 0; x < n; ++x) row[x] = s.at(a, y, x);
            fft::forward1d(row);
            for (std::size_t k = 0; k < padded; ++k) row[k] *= kernel[k].real() * conv_scale;
            fft::inverse1d(row);
            for (std::size_t x = 0; x < n; ++x) filtered.at(a, y, x) = row[x].real();
        }
    });

    const Pitch3 pitch = iso(s.pitch_nm);
    Volume out = Projector(dims, pitch, s.angles_deg).backward(filtered);
    const double scale = std::numbers::pi / static_cast<double>(s.angle_count()) / pitch.z;
    for (auto& v : out.data()) v *= scale;
    return out;
}

Volume sirt(const Sinogram& s, const Dims3& dims, const IterativeOptions& options) {
    check_sinogram(s, dims);
    const Pitch3 pitch = iso(s.pitch_nm);
    Volume x(dims, pitch, VolumeKind::kPhase);
    if (options.iterations <= 0) return x;
    const Projector proj(dims, pitch, s.angles_deg);
    const std::size_t plane = s.rows * s.cols;
    const std::size_t na = s.angle_count();

    std::vector<double> ones_vol(dims.count(), 1.0);
    std::vector<double> row_inv(na * plane);
    for (std::size_t n = 0; n < na; ++n) {
        proj.forward_angle(n, ones_vol, std::span<double>(row_inv).subspan(n * plane, plane));
    }
    for (auto& r : row_inv) r = r > 1e-12 ? 1.0 / r : 0.0;
    std::vector<double> col_inv(dims.count(), 0.0);
    {
        std::vector<double> ones_proj(plane, 1.0);
        for (std::size_t n = 0; n < na; ++n) proj.backward_angle(n, ones_proj, col_inv);
        for (auto& c : col_inv) c = c > 1e-12 ? 1.0 / c : 0.0;
    }

    std::vector<double> scratch(plane);
    std::vector<double> update(dims.count());
    auto xs = x.data();
    for (int it = 0; it < options.iterations; ++it) {
        std::fill(update.begin(), update.end(), 0.0);
        double res = 0.0;
        for (std::size_t n = 0; n < na; ++n) {
            proj.forward_angle(n, xs, scratch);
            const auto b = s.projection(n);
            for (std::size_t i = 0; i < plane; ++i) {
                const double r = b[i] - scratch[i];
                res += r * r;
                scratch[i] = r * row_inv[n * plane + i];
            }
            proj.backward_angle(n, scratch, update);
        }
        if (options.residual_log) options.residual_log->push_back(std::sqrt(res));
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xs[i] += options.relaxation * col_inv[i] * update[i];
            if (options.non_negative && xs[i] < 0.0) xs[i] = 0.0;
        }
    }
    if (options.residual_log) options.residual_log->push_back(residual_norm(proj, s, xs, scratch));
    return x;
}

Volume sart(const Sinogram& s, const Dims3& dims, const IterativeOptions& options) {
    check_sinogram(s, dims);
    const Pitch3 pitch = iso(s.pitch_nm);
    Volume x(dims, pitch, VolumeKind::kPhase);
    if (options.iterations <= 0) return x;
    const Projector proj(dims, pitch, s.angles_deg);
    const std::size_t plane = s.rows * s.cols;
    const std::size_t na = s.angle_count();

    std::vector<std::size_t> order(na);
    for (std::size_t n = 0; n < na; ++n) order[n] = n;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.angles_deg[a] < s.angles_deg[b]; });

    std::vector<double> ones_vol(dims.count(), 1.0);
    std::vector<double> ones_proj(plane, 1.0);
    std::vector<std::vector<double>> row_inv(na, std::vector<double>(plane));
    std::vector<std::vector<double>> col_inv(na, std::vector<double>(dims.count(), 0.0));
    parallel_for(na, [&](std::size_t n) {
        proj.forward_angle(n, ones_vol, row_inv[n]);
        for (auto& r : row_inv[n]) r = r > 1e-12 ? 1.0 / r : 0.0;
        proj.backward_angle(n, ones_proj, col_inv[n]);
        for (auto& c : col_inv[n]) c = c > 1e-12 ? 1.0 / c : 0.0;
    });

    std::vector<double> scratch(plane);
    std::vector<double> update(dims.count());
    auto xs = x.data();
    for (int it = 0; it < options.iterations; ++it) {
        if (options.residual_log) options.residual_log->push_back(residual_norm(proj, s, xs, scratch));
        for (std::size_t n : order) {
            proj.forward_angle(n, xs, scratch);
            const auto b = s.projection(n);
            for (std::size_t i = 0; i < plane; ++i) scratch[i] = (b[i] - scratch[i]) * row_inv[n][i];
            std::fill(update.begin(), update.end(), 0.0);
            proj.backward_angle(n, scratch, update);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                xs[i] += options.relaxation * col_inv[n][i] * update[i];
                if (options.non_negative && xs[i] < 0.0) xs[i] = 0.0;
            }
        }
    }
    if (options.residual_log) options.residual_log->push_back(residual_norm(proj, s, xs, scratch));
    return x;
}

Volume reconstruct(std::string_view method, const Sinogram& s, const Dims3& dims, int iterations) {
    IterativeOptions options;
    options.iterations = iterations;
    if (method == "fbp") return fbp(s, dims);
    if (method == "sirt") return sirt(s, dims, options);
    if (method == "sart") return sart(s, dims, options);
    throw UsageError("unknown reconstruction method '" + std::string(method) + "' (expected fbp, sirt or sart)");
}

PlaneFit fit_plane(const RealField2D& p, std::span<const char> mask) {
    if (!mask.empty() && mask.size() != p.size()) throw UsageError("ramp mask size differs from the projection");
    const double cy = 0.5 * static_cast<double>(p.rows() - 1);
    const double cx = 0.5 * static_cast<double>(p.cols() - 1);
    Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.cols(); ++c) {
            if (!mask.empty() && !mask[r * p.cols() + c]) continue;
            const Eigen::Vector3d basis(1.0, static_cast<double>(c) - cx, static_cast<double>(r) - cy);
            normal += basis * basis.transpose();
            rhs += basis * p(r, c);
        }
    const Eigen::Vector3d coef = normal.completeOrthogonalDecomposition().solve(rhs);
    return {coef(0) - coef(1) * cx - coef(2) * cy, coef(1), coef(2)};
}

RealField2D remove_phase_ramp(const RealField2D& p, std::span<const char> mask) {
    const PlaneFit plane = fit_plane(p, mask);
    RealField2D out = p;
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.cols(); ++c) {
            out(r, c) -= plane.offset + plane.slope_x * static_cast<double>(c) + plane.slope_y * static_cast<double>(r);
        }
    return out;
}

namespace {

double keys(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

// Sample k of a 1D signal, extended linearly past both ends.
double extended(std::span<const double> s, long k) {
    const long n = static_cast<long>(s.size());
    if (n == 1) return s[0];
    if (k < 0) return s[0] + static_cast<double>(k) * (s[1] - s[0]);
    if (k >= n) return s[static_cast<std::size_t>(n - 1)] + static_cast<double>(k - n + 1) * (s[static_cast<std::size_t>(n - 1)] - s[static_cast<std::size_t>(n - 2)]);
    return s[static_cast<std::size_t>(k)];
}

std::vector<double> upsample_line(std::span<const double> s) {
    std::vector<double> out(2 * s.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i % 2 == 0) {
            out[i] = s[i / 2];
            continue;
        }
        const double t = 0.5 * static_cast<double>(i);
        const long base = static_cast<long>(std::floor(t));
        double v = 0.0;
        for (long k = base - 1; k <= base + 2; ++k) v += extended(s, k) * keys(t - static_cast<double>(k));
        out[i] = v;
    }
    return out;
}

}  // namespace

RealField2D upsample2x(const RealField2D& p) {
    const std::size_t rows = p.rows();
    const std::size_t cols = p.cols();
    RealField2D wide(rows, 2 * cols, p.pitch());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto line = upsample_line(p.data().subspan(r * cols, cols));
        std::copy(line.begin(), line.end(), wide.data().begin() + static_cast<std::ptrdiff_t>(r * 2 * cols));
    }
    RealField2D out(2 * rows, 2 * cols, 0.5 * p.pitch());
    std::vector<double> column(rows);
    for (std::size_t c = 0; c < 2 * cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) column[r] = wide(r, c);
        const auto line = upsample_line(column);
        for (std::size_t r = 0; r < 2 * rows; ++r) out(r, c) = line[r];
    }
    return out;
}

Volume bin2x(const Volume& v) {
    const auto& d = v.dims();
    const Dims3 out_dims{std::max<std::size_t>(1, d.z / 2), std::max<std::size_t>(1, d.y / 2),
                         std::max<std::size_t>(1, d.x / 2)};
    const std::size_t fz = d.z / out_dims.z;
    const std::size_t fy = d.y / out_dims.y;
    const std::size_t fx = d.x / out_dims.x;
    Volume out(out_dims, {v.pitch().z * fz, v.pitch().y * fy, v.pitch().x * fx}, v.kind());
    const double norm = 1.0 / static_cast<double>(fz * fy * fx);
    for (std::size_t z = 0; z < out_dims.z * fz; ++z)
        for (std::size_t y = 0; y < out_dims.y * fy; ++y)
            for (std::size_t x = 0; x < out_dims.x * fx; ++x) out(z / fz, y / fy, x / fx) += v(z, y, x) * norm;
    return out;
}

Sinogram retrieve_projections(const sim::DiffractionStack& stack, const optics::ProbeSet& probe,
                              const scan::ScanPlan& plan, const RunConfig& config,
                              const RetrievalOptions& options) {
    RunConfig thin = config;
    thin.slice_count = 1;
    approx::DescentOptions descent;
    descent.iterations = options.iterations;
    descent.step = options.step;
    descent.momentum = options.momentum;

    Sinogram s;
    s.angles_deg = plan.angles_deg;
    s.rows = plan.plane_rows;
    s.cols = plan.plane_cols;
    s.pitch_nm = plan.pixel_pitch_nm;
    s.data.assign(s.angle_count() * s.rows * s.cols, 0.0);

    std::vector<char> mask;
    if (options.ramp_border_px > 0) {
        const auto border = static_cast<std::size_t>(options.ramp_border_px);
        if (2 * border >= s.cols) throw UsageError("ramp border covers the whole projection");
        mask.assign(s.rows * s.cols, 0);
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) mask[r * s.cols + c] = (c < border || c >= s.cols - border);
    }

    parallel_for(s.angle_count(), [&](std::size_t n) {
        const auto est = approx::retrieve_angle(stack, n, plan, probe, thin, descent);
        RealField2D phase(s.rows, s.cols, s.pitch_nm);
        for (std::size_t i = 0; i < phase.size(); ++i) phase[i] = std::arg(est.slices.front()[i]);
        const auto flat = remove_phase_ramp(phase, mask);
        for (std::size_t i = 0; i < flat.size(); ++i) s.data[n * s.rows * s.cols + i] = flat[i] * s.pitch_nm;
    });
    return s;
}

Volume gold_from_projections(const Sinogram& coarse, std::size_t depth, const GoldOptions& options) {
    IterativeOptions sart_options;
    sart_options.iterations = options.sart_iterations;
    if (!options.upsample) return sart(coarse, {depth, coarse.rows, coarse.cols}, sart_options);

    Sinogram fine;
    fine.angles_deg = coarse.angles_deg;
    fine.rows = 2 * coarse.rows;
    fine.cols = 2 * coarse.cols;
    fine.pitch_nm = 0.5 * coarse.pitch_nm;
    fine.data.resize(fine.angle_count() * fine.rows * fine.cols);
    for (std::size_t n = 0; n < coarse.angle_count(); ++n) {
        RealField2D p(coarse.rows, coarse.cols, coarse.pitch_nm);
        const auto src = coarse.projection(n);
        std::copy(src.begin(), src.end(), p.data().begin());
        const auto up = upsample2x(p);
        std::copy(up.data().begin(), up.data().end(),
                  fine.data.begin() + static_cast<std::ptrdiff_t>(n * fine.rows * fine.cols));
    }
    return sart(fine, {2 * depth, fine.rows, fine.cols}, sart_options);
}

Volume gold_pipeline(const sim::DiffractionStack& stack, const optics::ProbeSet& probe, const scan::ScanPlan& plan,
                     const RunConfig& config, const GoldOptions& options) {
    const Sinogram coarse = retrieve_projections(stack, probe, plan, config, options.retrieval);
    std::size_t depth = options.depth;
    if (depth == 0) {
        const double thickness = config.slice_spacing_nm * config.slice_count;
        depth = static_cast<std::size_t>(std::max(1L, std::lround(thickness / plan.pixel_pitch_nm)));
    }
    return gold_from_projections(coarse, depth, options);
}

}  // namespace xpt::tomo
