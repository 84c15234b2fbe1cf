#include "xpt/volume.hpp"

#include <cmath>
#include <string>

#include "xpt/error.hpp"

namespace xpt {

std::string_view to_string(VolumeKind kind) {
    switch (kind) {
        case VolumeKind::kPhase: return "phase";
        case VolumeKind::kLabel: return "label";
        case VolumeKind::kIntensity: return "intensity";
        case VolumeKind::kPsd: return "psd";
        case VolumeKind::kField: return "field";
    }
    return "unknown";
}

namespace {

void check_geometry(const Dims3& dims, const Pitch3& pitch) {
    if (dims.z == 0 || dims.y == 0 || dims.x == 0) {
        throw UsageError("volume dimensions must all be >= 1");
    }
    if (!(pitch.z > 0.0) || !(pitch.y > 0.0) || !(pitch.x > 0.0)) {
        throw UsageError("volume pitch must be strictly positive");
    }
}

}  // namespace

Volume::Volume(Dims3 dims, Pitch3 pitch, VolumeKind kind)
    : dims_(dims), pitch_(pitch), kind_(kind) {
    check_geometry(dims, pitch);
    data_.assign(dims.count(), 0.0);
}

Volume::Volume(Dims3 dims, Pitch3 pitch, VolumeKind kind, std::vector<double> data)
    : dims_(dims), pitch_(pitch), kind_(kind), data_(std::move(data)) {
    check_geometry(dims, pitch);
    if (data_.size() != dims.count()) {
        throw UsageError("volume data length " + std::to_string(data_.size()) +
                         " does not match dims product " + std::to_string(dims.count()));
    }
    if (kind == VolumeKind::kLabel) {
        for (double v : data_) {
            if (v != 0.0 && v != 1.0) throw UsageError("label volume holds a value outside {0,1}");
        }
    }
}

void require_finite(const ComplexField2D& f, std::string_view what) {
    for (const auto& v : f.data()) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw NumericalError(std::string(what) + ": non-finite value");
        }
    }
}

void require_finite(std::span<const double> values, std::string_view what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value");
    }
}

double l2_norm(const ComplexField2D& f) {
    double s = 0.0;
    for (const auto& v : f.data()) s += std::norm(v);
    return std::sqrt(s);
}

cdouble inner(const ComplexField2D& a, const ComplexField2D& b) {
    cdouble s{};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

}  // namespace xpt
