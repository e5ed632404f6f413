#pragma once

// Synthetic desk-scale data: category names built as "<modifier> <group>"
// token pairs, so names within a group share a token and cluster together
// under the mock encoder, and mock dataset manifests with per-domain noise.

#include <cstdint>
#include <string>
#include <vector>

#include "stylegen/common.hpp"
#include "stylegen/metrics.hpp"

namespace stylegen {

// groups x per_group names, e.g. "kind03 family1". Modifier tokens are
// globally unique; the group token is shared within a group.
inline std::vector<std::string> synthetic_categories(int groups, int per_group) {
    require(groups >= 1 && per_group >= 1, ErrorCode::config,
            "synthetic_categories: groups and per_group must be positive");
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(groups) * static_cast<std::size_t>(per_group));
    int serial = 0;
    for (int g = 0; g < groups; ++g)
        for (int i = 0; i < per_group; ++i, ++serial)
            names.push_back("kind" + std::to_string(serial) + " family" + std::to_string(g));
    return names;
}

// Split n names into a near-square number of groups (at least 2 when
// n >= 2), used by the diversity/timing sweeps where only the total count
// is specified.
inline std::vector<std::string> synthetic_categories_n(int n, int groups = 0) {
    require(n >= 1, ErrorCode::config, "synthetic_categories_n: n must be positive");
    if (n == 1) return {"kind0 family0"};
    if (groups <= 0) groups = std::max(2, std::min(8, n / 8));
    groups = std::min(groups, n);
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        names.push_back("kind" + std::to_string(i) + " family" +
                        std::to_string(i % groups));
    return names;
}

struct SyntheticDomain {
    std::string name;
    double sigma = 0.0;
};

// per_class records per (domain, class); record seeds run off one stream
// so manifests are reproducible.
inline DatasetManifest synthetic_manifest(const std::vector<std::string>& classes,
                                          const std::vector<SyntheticDomain>& domains,
                                          int per_class, std::uint64_t seed) {
    require(!classes.empty() && !domains.empty() && per_class >= 1, ErrorCode::config,
            "synthetic_manifest: empty inputs");
    SeededRng rng(mix64(seed ^ fnv1a64("manifest")));
    DatasetManifest m;
    for (const auto& domain : domains) {
        for (const auto& cls : classes) {
            for (int i = 0; i < per_class; ++i) {
                ManifestRecord rec;
                rec.domain = domain.name;
                rec.class_name = cls;
                rec.image.class_name = cls;
                rec.image.sigma = domain.sigma;
                rec.image.seed = rng.bits();
                m.records.push_back(std::move(rec));
            }
        }
    }
    return m;
}

} // namespace stylegen
