#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace xpt {

using cdouble = std::complex<double>;

/// Extent of a 3D array, axes ordered (z = beam/depth, y, x), row-major.
struct Dims3 {
    std::size_t z = 1;
    std::size_t y = 1;
    std::size_t x = 1;

    [[nodiscard]] std::size_t count() const { return z * y * x; }
    [[nodiscard]] std::size_t index(std::size_t iz, std::size_t iy, std::size_t ix) const {
        return (iz * y + iy) * x + ix;
    }
    bool operator==(const Dims3&) const = default;
};

/// Voxel edge length in nm per axis.
struct Pitch3 {
    double z = 14.0;
    double y = 14.0;
    double x = 14.0;
    bool operator==(const Pitch3&) const = default;
};

enum class VolumeKind : std::uint8_t { kPhase = 0, kLabel = 1, kIntensity = 2, kPsd = 3, kField = 4 };

std::string_view to_string(VolumeKind kind);

/// Real scalar 3D field with voxel pitch metadata. Values are held in double precision.
class Volume {
public:
    Volume() = default;
    Volume(Dims3 dims, Pitch3 pitch, VolumeKind kind);
    Volume(Dims3 dims, Pitch3 pitch, VolumeKind kind, std::vector<double> data);

    [[nodiscard]] const Dims3& dims() const { return dims_; }
    [[nodiscard]] const Pitch3& pitch() const { return pitch_; }
    [[nodiscard]] VolumeKind kind() const { return kind_; }
    void set_kind(VolumeKind kind) { kind_ = kind; }

    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t z, std::size_t y, std::size_t x) { return data_[dims_.index(z, y, x)]; }
    double operator()(std::size_t z, std::size_t y, std::size_t x) const { return data_[dims_.index(z, y, x)]; }

    bool operator==(const Volume&) const = default;

private:
    Dims3 dims_{};
    Pitch3 pitch_{};
    VolumeKind kind_ = VolumeKind::kPhase;
    std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Row-major 2D field (axes y, x) with a square pixel pitch in nm.
template <typename T>
class Field2D {
public:
    Field2D() = default;
    Field2D(std::size_t rows, std::size_t cols, double pitch = 1.0, T fill = T{})
        : rows_(rows), cols_(cols), pitch_(pitch), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] double pitch() const { return pitch_; }
    void set_pitch(double pitch) { pitch_ = pitch; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<T> data() { return data_; }
    [[nodiscard]] std::span<const T> data() const { return data_; }
    [[nodiscard]] bool same_shape(const Field2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Field2D&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double pitch_ = 1.0;
    std::vector<T> data_;
};

using ComplexField2D = Field2D<cdouble>;
using RealField2D = Field2D<double>;

/// Throws NumericalError if any element is NaN or infinite.
void require_finite(const ComplexField2D& f, std::string_view what);
void require_finite(std::span<const double> values, std::string_view what);

double l2_norm(const ComplexField2D& f);
cdouble inner(const ComplexField2D& a, const ComplexField2D& b);  // sum conj(a) * b

}  // namespace xpt
