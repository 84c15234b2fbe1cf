#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "xpt/rng.hpp"
#include "xpt/volume.hpp"

namespace xpt::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("xpt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Volume random_volume(Rng& rng, Dims3 dims, Pitch3 pitch = {}, VolumeKind kind = VolumeKind::kPhase) {
    std::normal_distribution<double> g(0.0, 1.0);
    Volume v(dims, pitch, kind);
    for (double& x : v.data()) x = g(rng);
    return v;
}

inline ComplexField2D random_field(Rng& rng, std::size_t rows, std::size_t cols, double pitch = 1.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    ComplexField2D f(rows, cols, pitch);
    for (auto& z : f.data()) z = {g(rng), g(rng)};
    return f;
}

}  // namespace xpt::test
