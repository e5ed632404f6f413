#pragma once

// KMeans++ clustering with deterministic restarts, and silhouette-based
// selection of the cluster count. Lloyd iterations run to convergence
// (max centroid shift < tol) or the iteration cap; the best of `restarts`
// runs by inertia wins. Silhouette uses cosine distance, matching the
// space the features live in.

#include <cstdint>
#include <limits>
#include <vector>

#include "stylegen/common.hpp"

namespace stylegen {

struct KmeansResult {
    std::vector<int> assignment; // size n, values in [0, k)
    Matrix centroids;            // k x p
    double inertia = 0.0;        // sum of squared distances to assigned centroid
    int iterations = 0;
};

namespace detail {

inline int nearest_centroid(std::span<const double> x, const Matrix& centroids,
                            double* dist_out = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        const double d = squared_distance(x, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

inline Matrix kmeanspp_seed(const Matrix& points, int k, SeededRng& rng) {
    const std::size_t n = points.rows;
    Matrix centroids(static_cast<std::size_t>(k), points.cols);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    std::size_t first = rng.below(n);
    centroids.set_row(0, points.row(first));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = squared_distance(points.row(i), centroids.row(c - 1));
            d2[i] = std::min(d2[i], d);
            total += d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = rng.below(n); // all mass on existing centers (duplicates)
        }
        centroids.set_row(static_cast<std::size_t>(c), points.row(chosen));
    }
    return centroids;
}

inline KmeansResult lloyd(const Matrix& points, Matrix centroids, int max_iter,
                          double tol) {
    const std::size_t n = points.rows;
    const std::size_t k = centroids.rows;
    KmeansResult res;
    res.assignment.assign(n, 0);

    for (int iter = 0; iter < max_iter; ++iter) {
        res.iterations = iter + 1;
        for (std::size_t i = 0; i < n; ++i)
            res.assignment[i] = nearest_centroid(points.row(i), centroids);

        // Re-home the farthest point into any empty cluster so every
        // cluster stays non-empty.
        std::vector<int> sizes(k, 0);
        for (int a : res.assignment) ++sizes[static_cast<std::size_t>(a)];
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] > 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto a = static_cast<std::size_t>(res.assignment[i]);
                if (sizes[a] <= 1) continue;
                const double d = squared_distance(points.row(i), centroids.row(a));
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            --sizes[static_cast<std::size_t>(res.assignment[worst_i])];
            res.assignment[worst_i] = static_cast<int>(c);
            ++sizes[c];
        }

        Matrix next(k, points.cols);
        for (std::size_t i = 0; i < n; ++i)
            axpy(1.0, points.row(i), next.row(static_cast<std::size_t>(res.assignment[i])));
        for (std::size_t c = 0; c < k; ++c) {
            auto row = next.row(c);
            for (double& v : row) v /= static_cast<double>(sizes[c]);
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(squared_distance(next.row(c), centroids.row(c))));
        centroids = std::move(next);
        if (shift < tol) break;
    }

    for (std::size_t i = 0; i < n; ++i)
        res.assignment[i] = nearest_centroid(points.row(i), centroids);
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        res.inertia += squared_distance(
            points.row(i), centroids.row(static_cast<std::size_t>(res.assignment[i])));
    res.centroids = std::move(centroids);
    return res;
}

} // namespace detail

inline KmeansResult kmeans_pp(const Matrix& points, int k, std::uint64_t seed,
                              int restarts = 10, int max_iter = 300, double tol = 1e-6) {
    const std::size_t n = points.rows;
    require(k >= 2 && static_cast<std::size_t>(k) <= (n > 0 ? n - 1 : 0),
            ErrorCode::config, "kmeans_pp: k out of range [2, n-1]");
    require(restarts >= 1, ErrorCode::config, "kmeans_pp: restarts must be >= 1");

    KmeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        SeededRng rng(mix64(seed ^ static_cast<std::uint64_t>(r)));
        KmeansResult res =
            detail::lloyd(points, detail::kmeanspp_seed(points, k, rng), max_iter, tol);
        if (res.inertia < best.inertia) best = std::move(res);
    }
    return best;
}

// Mean silhouette over all points, cosine distance d = 1 - cos. Points in
// singleton clusters contribute 0, the usual convention.
inline double mean_silhouette_cosine(const Matrix& points,
                                     const std::vector<int>& assignment) {
    const std::size_t n = points.rows;
    require(assignment.size() == n, ErrorCode::dimension,
            "silhouette: assignment size mismatch");
    int k = 0;
    for (int a : assignment) k = std::max(k, a + 1);
    require(k >= 2, ErrorCode::config, "silhouette: needs at least 2 clusters");

    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];

    double total = 0.0;
    std::vector<double> mean_dist(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(assignment[i]);
        if (sizes[own] <= 1) continue; // s(i) = 0
        std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = 1.0 - cosine(points.row(i), points.row(j));
            mean_dist[static_cast<std::size_t>(assignment[j])] += d;
        }
        const double a = mean_dist[own] / (sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, mean_dist[c] / sizes[c]);
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

struct KSearch {
    int k_min = 2;
    int k_max = 20;
    int restarts = 10;
    std::uint64_t seed = 0;
};

// k maximizing mean silhouette over [k_min, min(k_max, n-1)], ties broken
// toward smaller k. Errors when the inputs carry no usable dispersion.
inline int select_k(const Matrix& points, const KSearch& search) {
    const std::size_t n = points.rows;
    require(n >= 3, ErrorCode::config, "select_k: needs at least 3 points");

    double spread = 0.0;
    for (std::size_t i = 1; i < n; ++i)
        spread = std::max(spread, squared_distance(points.row(0), points.row(i)));
    require(spread > 1e-24, ErrorCode::degenerate_input,
            "select_k: all features identical, silhouette undefined");

    const int hi = std::min<int>(search.k_max, static_cast<int>(n) - 1);
    require(search.k_min >= 2 && search.k_min <= hi, ErrorCode::config,
            "select_k: empty k range");

    int best_k = search.k_min;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = search.k_min; k <= hi; ++k) {
        KmeansResult res =
            kmeans_pp(points, k, mix64(search.seed ^ static_cast<std::uint64_t>(k)),
                      search.restarts);
        const double score = mean_silhouette_cosine(points, res.assignment);
        if (score > best_score) {
            best_score = score;
            best_k = k;
        }
    }
    return best_k;
}

} // namespace stylegen
