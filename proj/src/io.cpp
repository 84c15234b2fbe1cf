#include "xpt/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "xpt/error.hpp"

namespace xpt {

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

template <typename U>
U get_le(std::span<const std::uint8_t> in, std::size_t offset) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(in[offset + i]) << (8 * i);
    }
    return value;
}

std::size_t element_bytes(DType dtype) {
    switch (dtype) {
        case DType::kF32: return 4;
        case DType::kF64: return 8;
        case DType::kC64: return 8;
        case DType::kU8: return 1;
    }
    throw UnsupportedFormat("unknown dtype");
}

std::uint8_t ndim_of(const Dims3& d) {
    if (d.z > 1) return 3;
    if (d.y > 1) return 2;
    return 1;
}

std::vector<std::uint8_t> encode_header(const ContainerHeader& h) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes);
    out.insert(out.end(), {'X', 'P', 'T', 'V'});
    out.push_back(kContainerVersion);
    out.push_back(static_cast<std::uint8_t>(h.dtype));
    out.push_back(static_cast<std::uint8_t>(h.kind));
    out.push_back(h.ndim);
    put_le<std::uint64_t>(out, h.dims.z);
    put_le<std::uint64_t>(out, h.dims.y);
    put_le<std::uint64_t>(out, h.dims.x);
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(h.pitch.z));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(h.pitch.y));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(h.pitch.x));
    put_le<std::uint64_t>(out, 0);
    return out;
}

ContainerHeader decode_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "XPTV", 4) != 0) throw BadMagic();
    if (bytes.size() < kHeaderBytes) throw TruncatedPayload("header shorter than 64 bytes");
    if (bytes[4] != kContainerVersion) {
        throw UnsupportedFormat("unsupported container version " + std::to_string(bytes[4]));
    }
    ContainerHeader h;
    if (bytes[5] > 3) throw UnsupportedFormat("unsupported dtype code " + std::to_string(bytes[5]));
    if (bytes[6] > 4) throw UnsupportedFormat("unsupported kind code " + std::to_string(bytes[6]));
    h.dtype = static_cast<DType>(bytes[5]);
    h.kind = static_cast<VolumeKind>(bytes[6]);
    h.ndim = bytes[7];
    if (h.ndim < 1 || h.ndim > 3) throw UnsupportedFormat("unsupported ndim " + std::to_string(h.ndim));
    h.dims = {get_le<std::uint64_t>(bytes, 8), get_le<std::uint64_t>(bytes, 16),
              get_le<std::uint64_t>(bytes, 24)};
    h.pitch = {std::bit_cast<double>(get_le<std::uint64_t>(bytes, 32)),
               std::bit_cast<double>(get_le<std::uint64_t>(bytes, 40)),
               std::bit_cast<double>(get_le<std::uint64_t>(bytes, 48))};
    if (h.dims.z == 0 || h.dims.y == 0 || h.dims.x == 0) throw DataError("container has a zero dimension");
    if (!(h.pitch.z > 0) || !(h.pitch.y > 0) || !(h.pitch.x > 0)) throw DataError("container has non-positive pitch");
    return h;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

std::span<const std::uint8_t> payload_of(std::span<const std::uint8_t> bytes, const ContainerHeader& h) {
    const std::size_t available = (bytes.size() - kHeaderBytes) / element_bytes(h.dtype);
    if (h.dims.y > available || h.dims.x > available || h.dims.y * h.dims.x > available ||
        h.dims.z > available / (h.dims.y * h.dims.x)) {
        throw TruncatedPayload("dims exceed the stored payload");
    }
    const std::size_t need = h.dims.count() * element_bytes(h.dtype);
    if (bytes.size() - kHeaderBytes < need) {
        throw TruncatedPayload("expected " + std::to_string(need) + " payload bytes, found " +
                               std::to_string(bytes.size() - kHeaderBytes));
    }
    return bytes.subspan(kHeaderBytes, need);
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const Volume& v, DType dtype) {
    if (dtype == DType::kC64) throw UsageError("real volumes cannot be stored as complex64");
    ContainerHeader h{dtype, v.kind(), ndim_of(v.dims()), v.dims(), v.pitch()};
    auto out = encode_header(h);
    out.reserve(kHeaderBytes + v.size() * element_bytes(dtype));
    for (double value : v.data()) {
        switch (dtype) {
            case DType::kF32: put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(value))); break;
            case DType::kF64: put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value)); break;
            case DType::kU8:
                if (value < 0.0 || value > 255.0 || value != std::floor(value)) {
                    throw UsageError("value not representable as u8");
                }
                out.push_back(static_cast<std::uint8_t>(value));
                break;
            case DType::kC64: break;
        }
    }
    return out;
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
    const auto h = decode_header(bytes);
    if (h.dtype == DType::kC64) throw UnsupportedFormat("complex container cannot be read as a real volume");
    const auto payload = payload_of(bytes, h);
    std::vector<double> data(h.dims.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        switch (h.dtype) {
            case DType::kF32: data[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, 4 * i)); break;
            case DType::kF64: data[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload, 8 * i)); break;
            case DType::kU8: data[i] = payload[i]; break;
            case DType::kC64: break;
        }
    }
    return Volume(h.dims, h.pitch, h.kind, std::move(data));
}

void write_volume(const Volume& v, const std::filesystem::path& path, DType dtype) {
    write_bytes(encode_volume(v, dtype), path);
}

Volume read_volume(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return decode_volume(bytes);
}

ContainerHeader read_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes(kHeaderBytes);
    in.read(reinterpret_cast<char*>(bytes.data()), kHeaderBytes);
    bytes.resize(static_cast<std::size_t>(in.gcount()));
    return decode_header(bytes);
}

void write_complex_stack(std::span<const ComplexField2D> fields, const std::filesystem::path& path) {
    if (fields.empty()) throw UsageError("cannot write an empty complex stack");
    const auto& first = fields.front();
    for (const auto& f : fields) {
        if (!f.same_shape(first)) throw UsageError("complex stack fields differ in shape");
    }
    ContainerHeader h;
    h.dtype = DType::kC64;
    h.kind = VolumeKind::kField;
    h.dims = {fields.size(), first.rows(), first.cols()};
    h.ndim = ndim_of(h.dims);
    h.pitch = {1.0, first.pitch(), first.pitch()};
    auto out = encode_header(h);
    for (const auto& f : fields) {
        for (const auto& c : f.data()) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(c.real())));
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(c.imag())));
        }
    }
    write_bytes(out, path);
}

std::vector<ComplexField2D> read_complex_stack(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto h = decode_header(bytes);
    if (h.dtype != DType::kC64) throw UnsupportedFormat("expected a complex64 container");
    const auto payload = payload_of(bytes, h);
    std::vector<ComplexField2D> fields;
    fields.reserve(h.dims.z);
    std::size_t k = 0;
    for (std::size_t s = 0; s < h.dims.z; ++s) {
        ComplexField2D f(h.dims.y, h.dims.x, h.pitch.x);
        for (auto& c : f.data()) {
            const float re = std::bit_cast<float>(get_le<std::uint32_t>(payload, 8 * k));
            const float im = std::bit_cast<float>(get_le<std::uint32_t>(payload, 8 * k + 4));
            c = {re, im};
            ++k;
        }
        fields.push_back(std::move(f));
    }
    return fields;
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace xpt
