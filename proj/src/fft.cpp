#include "xpt/fft.hpp"

#include <fftw3.h>

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace xpt::fft {

namespace {

using Key = std::pair<std::array<int, 3>, int>;  // (shape, sign)

class PlanCache {
public:
    ~PlanCache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }

    fftw_plan get(std::array<int, 3> shape, int rank, int sign) {
        std::lock_guard lock(mutex_);
        const Key key{shape, sign};
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        std::size_t n = 1;
        for (int i = 0; i < rank; ++i) n *= static_cast<std::size_t>(shape[i]);
        std::vector<fftw_complex> scratch(n);
        // FFTW_ESTIMATE keeps the algorithm choice, and therefore the output bits, reproducible.
        fftw_plan p = fftw_plan_dft(rank, shape.data(), scratch.data(), scratch.data(), sign,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

private:
    std::mutex mutex_;
    std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

void run(std::span<cdouble> data, std::array<int, 3> shape, int rank, int sign) {
    if (data.empty()) return;
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(cache().get(shape, rank, sign), ptr, ptr);
    const double scale = 1.0 / std::sqrt(static_cast<double>(data.size()));
    for (auto& v : data) v *= scale;
}

}  // namespace

void forward2d(ComplexField2D& f) {
    run(f.data(), {static_cast<int>(f.rows()), static_cast<int>(f.cols()), 1}, 2, FFTW_FORWARD);
}

void inverse2d(ComplexField2D& f) {
    run(f.data(), {static_cast<int>(f.rows()), static_cast<int>(f.cols()), 1}, 2, FFTW_BACKWARD);
}

void forward1d(std::span<cdouble> data) {
    run(data, {static_cast<int>(data.size()), 1, 1}, 1, FFTW_FORWARD);
}

void inverse1d(std::span<cdouble> data) {
    run(data, {static_cast<int>(data.size()), 1, 1}, 1, FFTW_BACKWARD);
}

void forward3d(std::span<cdouble> data, const Dims3& dims) {
    run(data, {static_cast<int>(dims.z), static_cast<int>(dims.y), static_cast<int>(dims.x)}, 3, FFTW_FORWARD);
}

}  // namespace xpt::fft
