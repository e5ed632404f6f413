#pragma once

// Simplex equiangular-tight-frame templates: K unit vectors in R^P whose
// pairwise inner products all equal -1/(K-1), the equal-and-maximal-margin
// configuration. Built as sqrt(K/(K-1)) * U * (I - 11^T/K) with U a seeded
// random partial orthogonal matrix, so the frame's orientation is an
// arbitrary but reproducible rotation.

#include <cstdint>
#include <string>

#include "stylegen/common.hpp"

namespace stylegen {

struct EtfTemplate {
    Matrix vectors; // k rows, p columns; row i is template i
    int k = 0;
    int p = 0;
    std::uint64_t seed = 0;

    std::span<const double> vector(std::size_t i) const { return vectors.row(i); }
};

namespace detail {

// Modified Gram-Schmidt with one re-orthogonalization pass. Returns false
// when the candidate is (numerically) inside the span of the accepted rows.
inline bool orthonormalize_against(std::span<double> v, const Matrix& basis,
                                   std::size_t count) {
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < count; ++i) {
            axpy(-dot(v, basis.row(i)), basis.row(i), v);
        }
    }
    const double n = norm(v);
    if (n < 1e-8) return false;
    for (double& x : v) x /= n;
    return true;
}

} // namespace detail

// Random rotation of R^p (orthonormal p x p matrix, rows form the basis).
// Deterministic per seed; also used by tests for rotation-invariance checks.
inline Matrix random_rotation(int p, std::uint64_t seed) {
    require(p > 0, ErrorCode::config, "random_rotation: p must be positive");
    SeededRng rng(seed);
    Matrix q(static_cast<std::size_t>(p), static_cast<std::size_t>(p));
    Vec candidate(static_cast<std::size_t>(p));
    std::size_t done = 0;
    while (done < q.rows) {
        for (double& x : candidate) x = rng.gaussian();
        q.set_row(done, candidate);
        if (detail::orthonormalize_against(q.row(done), q, done)) ++done;
    }
    return q;
}

// Build the K-template simplex ETF in R^P.
//   pre:  2 <= k <= p, both finite positive.
//   post: unit rows, pairwise dot -1/(k-1), rows sum to zero; deterministic
//         per (k, p, seed).
inline EtfTemplate build_etf(int k, int p, std::uint64_t seed) {
    require(k >= 2, ErrorCode::config, "build_etf: k must be at least 2");
    require(p >= k, ErrorCode::config,
            "build_etf: requires p >= k (no partial orthogonal matrix otherwise)");

    // Partial orthogonal U: k orthonormal rows in R^p from a seeded
    // Gaussian draw. Degenerate draws are skipped; the stream makes the
    // retry deterministic.
    SeededRng rng(mix64(seed ^ fnv1a64("etf")));
    Matrix u(static_cast<std::size_t>(k), static_cast<std::size_t>(p));
    Vec candidate(static_cast<std::size_t>(p));
    std::size_t done = 0;
    while (done < u.rows) {
        for (double& x : candidate) x = rng.gaussian();
        u.set_row(done, candidate);
        if (detail::orthonormalize_against(u.row(done), u, done)) ++done;
    }

    // Center the rows and scale: e_i = sqrt(k/(k-1)) * (u_i - mean(u)).
    Vec mean(static_cast<std::size_t>(p), 0.0);
    for (std::size_t i = 0; i < u.rows; ++i) axpy(1.0, u.row(i), mean);
    for (double& x : mean) x /= static_cast<double>(k);

    const double scale = std::sqrt(static_cast<double>(k) / (k - 1.0));
    EtfTemplate etf;
    etf.vectors = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(p));
    for (std::size_t i = 0; i < u.rows; ++i) {
        auto dst = etf.vectors.row(i);
        auto src = u.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = scale * (src[j] - mean[j]);
    }
    etf.k = k;
    etf.p = p;
    etf.seed = seed;
    return etf;
}

struct EtfReport {
    double max_norm_deviation = 0.0;    // max_i |  ||e_i|| - 1 |
    double max_offdiag_deviation = 0.0; // max_{i<j} | cos(e_i,e_j) + 1/(k-1) |
    double column_sum_norm = 0.0;       // || sum_i e_i ||

    bool passes(double tolerance) const {
        return max_norm_deviation <= tolerance &&
               max_offdiag_deviation <= tolerance && column_sum_norm <= tolerance;
    }
};

// Exact maxima over all rows/pairs; pure measurement, never throws on a
// badly shaped frame (that is the point of measuring it).
inline EtfReport verify_etf(const EtfTemplate& etf) {
    EtfReport rep;
    const std::size_t k = etf.vectors.rows;
    const double target = -1.0 / (static_cast<double>(k) - 1.0);

    Vec norms(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        norms[i] = norm(etf.vector(i));
        rep.max_norm_deviation = std::max(rep.max_norm_deviation, std::abs(norms[i] - 1.0));
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double denom = std::max(norms[i] * norms[j], 1e-300);
            const double cos_ij = dot(etf.vector(i), etf.vector(j)) / denom;
            rep.max_offdiag_deviation =
                std::max(rep.max_offdiag_deviation, std::abs(cos_ij - target));
        }
    }
    Vec sum(etf.vectors.cols, 0.0);
    for (std::size_t i = 0; i < k; ++i) axpy(1.0, etf.vector(i), sum);
    rep.column_sum_norm = norm(sum);
    return rep;
}

inline bool verify_etf_passes(const EtfTemplate& etf, double tolerance) {
    require(tolerance > 0.0, ErrorCode::config, "verify_etf: tolerance must be positive");
    return verify_etf(etf).passes(tolerance);
}

} // namespace stylegen
