#pragma once

// Binary array container used for every persisted tensor (ETF templates,
// pseudo-style embeddings, classifier heads, cached features).
//
// Layout, all integers little-endian:
//   bytes 0..7   magic "SGARR001"
//   byte  8      dtype tag (1 = f64, 2 = i64)
//   bytes 9..11  reserved, zero
//   u32          ndim
//   u64 * ndim   shape
//   u64          metadata length in bytes
//   ...          metadata (UTF-8, conventionally JSON; may be empty)
//   ...          payload, row-major
//
// Writes are atomic (temp file + rename) so a crashed run never leaves a
// truncated container behind. Identical inputs produce identical bytes;
// callers must keep timestamps out of the metadata if they rely on that.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "stylegen/common.hpp"

namespace stylegen {

inline constexpr char kArrayMagic[8] = {'S', 'G', 'A', 'R', 'R', '0', '0', '1'};

enum class Dtype : std::uint8_t { f64 = 1, i64 = 2 };

struct LoadedArray {
    Dtype dtype = Dtype::f64;
    std::vector<std::uint64_t> shape;
    std::string metadata;
    std::vector<double> f64;
    std::vector<std::int64_t> i64;

    std::uint64_t element_count() const {
        return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                               std::multiplies<>());
    }

    Matrix as_matrix() const {
        require(dtype == Dtype::f64 && shape.size() == 2, ErrorCode::dimension,
                "array is not a 2-d f64 container");
        Matrix m(static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]));
        m.data = f64;
        return m;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
    return v;
}

inline std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
    return v;
}

// f64 <-> little-endian u64 bit pattern. memcpy between double and u64
// preserves the logical bit pattern on any host; put_u64 fixes the byte order.
inline void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

inline double get_f64(const char* p) {
    std::uint64_t bits = get_u64(p);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorCode::io, "cannot open for write: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), ErrorCode::io, "short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string header_bytes(Dtype dtype, std::span<const std::uint64_t> shape,
                                const std::string& metadata) {
    std::string out;
    out.append(kArrayMagic, sizeof kArrayMagic);
    out.push_back(static_cast<char>(dtype));
    out.append(3, '\0');
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::uint64_t s : shape) put_u64(out, s);
    put_u64(out, metadata.size());
    out.append(metadata);
    return out;
}

} // namespace detail

inline void save_array(const std::filesystem::path& path,
                       std::span<const std::uint64_t> shape,
                       std::span<const double> values,
                       const std::string& metadata = "") {
    std::uint64_t n = 1;
    for (std::uint64_t s : shape) n *= s;
    require(n == values.size(), ErrorCode::dimension,
            "save_array: shape does not match value count");
    std::string bytes = detail::header_bytes(Dtype::f64, shape, metadata);
    bytes.reserve(bytes.size() + values.size() * 8);
    for (double v : values) detail::put_f64(bytes, v);
    detail::write_atomic(path, bytes);
}

inline void save_array(const std::filesystem::path& path, const Matrix& m,
                       const std::string& metadata = "") {
    const std::uint64_t shape[2] = {m.rows, m.cols};
    save_array(path, shape, m.data, metadata);
}

inline void save_array_i64(const std::filesystem::path& path,
                           std::span<const std::uint64_t> shape,
                           std::span<const std::int64_t> values,
                           const std::string& metadata = "") {
    std::uint64_t n = 1;
    for (std::uint64_t s : shape) n *= s;
    require(n == values.size(), ErrorCode::dimension,
            "save_array_i64: shape does not match value count");
    std::string bytes = detail::header_bytes(Dtype::i64, shape, metadata);
    for (std::int64_t v : values) detail::put_u64(bytes, static_cast<std::uint64_t>(v));
    detail::write_atomic(path, bytes);
}

inline LoadedArray load_array(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::missing_input, "cannot open array: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    auto need = [&](std::size_t offset, std::size_t count) {
        require(bytes.size() >= offset + count, ErrorCode::parse,
                "truncated array container: " + path.string());
    };

    need(0, 16);
    require(std::memcmp(bytes.data(), kArrayMagic, sizeof kArrayMagic) == 0,
            ErrorCode::parse, "bad magic in array container: " + path.string());

    LoadedArray arr;
    const auto tag = static_cast<std::uint8_t>(bytes[8]);
    require(tag == 1 || tag == 2, ErrorCode::parse, "unknown dtype tag");
    arr.dtype = static_cast<Dtype>(tag);

    std::size_t off = 12;
    const std::uint32_t ndim = detail::get_u32(bytes.data() + off);
    off += 4;
    require(ndim <= 16, ErrorCode::parse, "implausible ndim");
    need(off, 8 * ndim + 8);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        arr.shape.push_back(detail::get_u64(bytes.data() + off));
        off += 8;
    }
    const std::uint64_t meta_len = detail::get_u64(bytes.data() + off);
    off += 8;
    need(off, meta_len);
    arr.metadata.assign(bytes.data() + off, meta_len);
    off += meta_len;

    const std::uint64_t n = arr.element_count();
    need(off, n * 8);
    if (arr.dtype == Dtype::f64) {
        arr.f64.resize(n);
        for (std::uint64_t i = 0; i < n; ++i)
            arr.f64[i] = detail::get_f64(bytes.data() + off + i * 8);
    } else {
        arr.i64.resize(n);
        for (std::uint64_t i = 0; i < n; ++i)
            arr.i64[i] = static_cast<std::int64_t>(detail::get_u64(bytes.data() + off + i * 8));
    }
    return arr;
}

} // namespace stylegen
