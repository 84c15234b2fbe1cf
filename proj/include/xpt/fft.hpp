#pragma once

#include <cstddef>
#include <span>

#include "xpt/volume.hpp"

namespace xpt::fft {

// Unitary discrete Fourier transforms (1/sqrt(N) on both directions), backed by FFTW.
// Plans are cached per shape and shared across threads; execution is reentrant.

void forward2d(ComplexField2D& f);
void inverse2d(ComplexField2D& f);

void forward1d(std::span<cdouble> data);
void inverse1d(std::span<cdouble> data);

void forward3d(std::span<cdouble> data, const Dims3& dims);

/// Signed integer frequency index of DFT bin k for length n (0, 1, ..., -1).
inline long freq_index(std::size_t k, std::size_t n) {
    return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace xpt::fft
