#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "xpt/volume.hpp"

namespace xpt {

/// On-disk element type of an .xptv payload.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kC64 = 2, kU8 = 3 };

inline constexpr std::size_t kHeaderBytes = 64;
inline constexpr std::uint8_t kContainerVersion = 1;

/// Decoded fixed-size header of an .xptv file.
struct ContainerHeader {
    DType dtype = DType::kF32;
    VolumeKind kind = VolumeKind::kPhase;
    std::uint8_t ndim = 3;
    Dims3 dims{};
    Pitch3 pitch{};
};

// Real volumes. Default storage is 32-bit float; pass DType::kF64 for lossless double storage.
void write_volume(const Volume& v, const std::filesystem::path& path, DType dtype = DType::kF32);
Volume read_volume(const std::filesystem::path& path);

// Stacks of equally shaped complex 2D fields (probe modes, object slices), stored as complex64.
void write_complex_stack(std::span<const ComplexField2D> fields, const std::filesystem::path& path);
std::vector<ComplexField2D> read_complex_stack(const std::filesystem::path& path);

ContainerHeader read_header(const std::filesystem::path& path);

// Byte-level codec, exposed for tests.
std::vector<std::uint8_t> encode_volume(const Volume& v, DType dtype);
Volume decode_volume(std::span<const std::uint8_t> bytes);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace xpt
