#pragma once

// Shared numeric substrate: row-major double matrices, span-based vector
// math, deterministic hash streams, and the library error type.
//
// Determinism contract: every random quantity in the library is derived
// either from SeededRng (a stateful mt19937_64 stream) or from the
// stateless gaussian_at/mix64 hash chain, so identical seeds reproduce
// identical bits on one platform.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stylegen {

enum class ErrorCode {
    config,           // invalid configuration or arguments
    missing_input,    // a required stage input / file is absent
    llm,              // LLM transport failure or replay miss
    parse,            // unparseable response or file
    divergence,       // non-finite loss during training
    dimension,        // shape/dimension mismatch
    degenerate_input, // input with no usable structure (e.g. identical points)
    io,               // filesystem / serialization failure
    internal,         // broken library invariant
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

using Vec = std::vector<double>;

// Dense row-major matrix. Rows are the natural unit everywhere in this
// library (template vectors, pseudo-style embeddings, feature batches).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    void set_row(std::size_t r, std::span<const double> v) {
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols));
    }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(),
                           [](double x) { return std::isfinite(x); });
    }
};

// ---------------------------------------------------------------------------
// Span math
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::dimension, "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    require(na > 0.0 && nb > 0.0, ErrorCode::degenerate_input,
            "cosine: zero-norm vector");
    return dot(a, b) / (na * nb);
}

// In-place x /= ||x||; rejects zero vectors.
inline void normalize(std::span<double> x) {
    const double n = norm(x);
    require(n > 0.0, ErrorCode::degenerate_input, "normalize: zero-norm vector");
    for (double& v : x) v /= n;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), ErrorCode::dimension, "axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::dimension, "squared_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Deterministic hashing and stateless random streams
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// splitmix64 finalizer; the workhorse for key mixing.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Map 64 random bits to (0,1); never returns 0 or 1.
inline double unit_interval(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1p-53;
}

// Stateless standard-normal draw keyed by three 64-bit values (Box-Muller
// over hashed uniforms). Used for token embeddings, projections and any
// quantity that must be a pure function of its indices.
inline double gaussian_at(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3) {
    std::uint64_t s = mix64(k1);
    s = mix64(s ^ (k2 + kGolden));
    s = mix64(s ^ (k3 + 0xD1B54A32D192ED03ULL));
    const double u1 = unit_interval(mix64(s + 1));
    const double u2 = unit_interval(mix64(s + 2));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Stateful seeded stream for draws that are naturally sequential
// (initialization, shuffling, k-means restarts). Gaussians use our own
// Box-Muller so the stream does not depend on the standard library's
// distribution implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    double uniform() { return unit_interval(gen_()); } // (0,1)

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n) {
        require(n > 0, ErrorCode::config, "SeededRng::below: n must be positive");
        // Lemire multiply-shift; bias is < 2^-64 per call, irrelevant here,
        // and the result is a pure function of the stream.
        using u128 = unsigned __int128;
        return static_cast<std::size_t>(
            (static_cast<u128>(gen_()) * static_cast<u128>(n)) >> 64);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace stylegen
