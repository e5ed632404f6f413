#pragma once

// Inference, per-domain accuracy evaluation over dataset manifests, and the
// diagnostic metrics:
//   SD (style diversity)     - mean |cos| over style-feature pairs, lower
//                              means more diverse;
//   SC (semantic consistency) - mean cos between content and style-content
//                              features, higher means styles preserve class
//                              semantics;
// plus the stage-1 wall-clock comparison across training schedules.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stylegen/classifier.hpp"
#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"
#include "stylegen/losses.hpp"
#include "stylegen/style_trainer.hpp"

namespace stylegen {

// ---------------------------------------------------------------------------
// Prediction and evaluation
// ---------------------------------------------------------------------------

// Argmax of cosine against the normalized head rows; ties resolve to the
// lowest class index.
inline int predict(std::span<const double> feature, const LinearHead& head) {
    require(head.weights.rows > 0, ErrorCode::config, "predict: empty head");
    require(feature.size() == head.weights.cols, ErrorCode::dimension,
            "predict: feature dim does not match head");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < head.weights.rows; ++j) {
        const double score = cosine(head.weights.row(j), feature);
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(j);
        }
    }
    return best;
}

struct ManifestRecord {
    std::string domain;
    std::string class_name;
    ImageRef image;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;

    // Every record's class must resolve, and the manifest's class set must
    // equal the run's category set.
    void validate(const std::vector<std::string>& class_names) const {
        require(!records.empty(), ErrorCode::config, "manifest is empty");
        std::set<std::string> classes(class_names.begin(), class_names.end());
        std::set<std::string> seen;
        for (const auto& r : records) {
            require(classes.count(r.class_name) > 0, ErrorCode::config,
                    "manifest class not in the category set: " + r.class_name);
            seen.insert(r.class_name);
        }
        require(seen == classes, ErrorCode::config,
                "manifest does not cover the category set");
    }
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::missing_input, "cannot open manifest: " + path.string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    require(!j.is_discarded() && j.contains("records"), ErrorCode::parse,
            "manifest is not valid JSON with a records array: " + path.string());
    DatasetManifest m;
    for (const auto& r : j.at("records")) {
        ManifestRecord rec;
        rec.domain = r.at("domain").get<std::string>();
        rec.class_name = r.at("class").get<std::string>();
        rec.image.class_name = rec.class_name;
        rec.image.path = r.value("path", "");
        rec.image.sigma = r.value("sigma", 0.0);
        rec.image.seed = r.value("seed", std::uint64_t{0});
        m.records.push_back(std::move(rec));
    }
    return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : m.records) {
        nlohmann::json rec = {{"domain", r.domain}, {"class", r.class_name}};
        if (!r.image.path.empty()) rec["path"] = r.image.path;
        rec["sigma"] = r.image.sigma;
        rec["seed"] = r.image.seed;
        records.push_back(std::move(rec));
    }
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::io, "cannot write manifest: " + path.string());
    out << nlohmann::json{{"records", records}}.dump(2) << '\n';
}

// Directory layout domain/class/*.img, for external-backend datasets.
inline DatasetManifest load_manifest_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    require(fs::is_directory(root), ErrorCode::missing_input,
            "manifest directory does not exist: " + root.string());
    DatasetManifest m;
    std::vector<fs::path> domains;
    for (const auto& d : fs::directory_iterator(root))
        if (d.is_directory()) domains.push_back(d.path());
    std::sort(domains.begin(), domains.end());
    for (const auto& domain : domains) {
        std::vector<fs::path> classes;
        for (const auto& c : fs::directory_iterator(domain))
            if (c.is_directory()) classes.push_back(c.path());
        std::sort(classes.begin(), classes.end());
        for (const auto& cls : classes) {
            std::vector<fs::path> files;
            for (const auto& f : fs::directory_iterator(cls))
                if (f.is_regular_file()) files.push_back(f.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                ManifestRecord rec;
                rec.domain = domain.filename().string();
                rec.class_name = cls.filename().string();
                rec.image.class_name = rec.class_name;
                rec.image.path = f.string();
                m.records.push_back(std::move(rec));
            }
        }
    }
    return m;
}

struct EvalReport {
    std::map<std::string, double> per_domain; // top-1 accuracy
    double macro = 0.0;                       // unweighted mean over domains
    std::size_t total_records = 0;
};

// Streaming top-1 evaluation; constant memory in the dataset size. Records
// may be sharded across workers, counts are merged associatively so the
// result is order-independent.
inline EvalReport evaluate(const DatasetManifest& manifest, const LinearHead& head,
                           const EncoderBackend& enc, int workers = 1) {
    manifest.validate(head.class_names);
    require(workers >= 1, ErrorCode::config, "evaluate: workers must be >= 1");

    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < head.class_names.size(); ++i)
        class_index[head.class_names[i]] = static_cast<int>(i);

    struct Counts {
        std::map<std::string, std::pair<std::size_t, std::size_t>> by_domain; // hit, total
    };

    auto run_range = [&](std::size_t begin, std::size_t end, Counts& counts) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& rec = manifest.records[i];
            const JointFeature f = enc.encode_image(rec.image);
            const int hit = predict(f.v, head) == class_index.at(rec.class_name);
            auto& [hits, total] = counts.by_domain[rec.domain];
            hits += static_cast<std::size_t>(hit);
            ++total;
        }
    };

    std::vector<Counts> shards(static_cast<std::size_t>(workers));
    if (workers == 1) {
        run_range(0, manifest.records.size(), shards[0]);
    } else {
        std::vector<std::thread> pool;
        const std::size_t n = manifest.records.size();
        const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) /
                                  static_cast<std::size_t>(workers);
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = static_cast<std::size_t>(w) * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run_range, begin, end, std::ref(shards[static_cast<std::size_t>(w)]));
        }
        for (auto& t : pool) t.join();
    }

    std::map<std::string, std::pair<std::size_t, std::size_t>> merged;
    for (const auto& shard : shards)
        for (const auto& [domain, ht] : shard.by_domain) {
            merged[domain].first += ht.first;
            merged[domain].second += ht.second;
        }

    EvalReport report;
    for (const auto& [domain, ht] : merged) {
        report.per_domain[domain] =
            static_cast<double>(ht.first) / static_cast<double>(ht.second);
        report.macro += report.per_domain[domain];
        report.total_records += ht.second;
    }
    report.macro /= static_cast<double>(report.per_domain.size());
    return report;
}

// ---------------------------------------------------------------------------
// Diagnostic metrics
// ---------------------------------------------------------------------------

// Mean |cos| over the K(K-1)/2 unordered style-feature pairs.
inline double metric_sd(const Matrix& style_features) {
    require(style_features.rows >= 2, ErrorCode::config, "metric_sd: needs K >= 2");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < style_features.rows; ++i)
        for (std::size_t j = i + 1; j < style_features.rows; ++j) {
            total += std::abs(cosine(style_features.row(i), style_features.row(j)));
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

// Mean cos(f_content(c), f_style_content(theta_i, c)) over styles x names.
inline double metric_sc(const Matrix& theta, const std::vector<std::string>& names,
                        const EncoderBackend& enc) {
    require(!names.empty(), ErrorCode::config, "metric_sc: empty name list");
    require(theta.rows >= 1, ErrorCode::config, "metric_sc: no styles");
    ContentFeatureCache content(enc);
    double total = 0.0;
    for (std::size_t i = 0; i < theta.rows; ++i) {
        for (const auto& name : names) {
            const JointFeature sc = enc.encode_text(
                assemble_prompt(PromptKind::style_content, static_cast<int>(i), name),
                theta.row(i));
            total += cosine(content.get(name), sc.v);
        }
    }
    return total / static_cast<double>(theta.rows * names.size());
}

// ---------------------------------------------------------------------------
// Timing comparison
// ---------------------------------------------------------------------------

struct TimingEntry {
    std::string mode;
    std::vector<double> runs_s;
    double median_s = 0.0;
    double variance = 0.0;
};

// Wall-clock for each training schedule on identical inputs, median of
// `reps` runs (>= 3 for the reported numbers), budgets matched per the
// sequential fairness convention.
inline std::vector<TimingEntry> timing_compare(const std::vector<TrainMode>& modes,
                                               const StyleTrainConfig& cfg,
                                               const EncoderBackend& enc,
                                               const EtfTemplate* etf,
                                               const std::vector<std::string>* css,
                                               const std::vector<std::string>* categories,
                                               int reps = 3) {
    require(reps >= 1, ErrorCode::config, "timing_compare: reps must be >= 1");
    std::vector<TimingEntry> table;
    for (TrainMode mode : modes) {
        TimingEntry entry;
        entry.mode = to_string(mode);
        for (int r = 0; r < reps; ++r) {
            StyleTrainResult res = train_styles(mode, cfg, enc, etf, css, categories);
            entry.runs_s.push_back(res.wall_s);
        }
        std::vector<double> sorted = entry.runs_s;
        std::sort(sorted.begin(), sorted.end());
        entry.median_s = sorted[sorted.size() / 2];
        double mean = 0.0;
        for (double v : entry.runs_s) mean += v;
        mean /= static_cast<double>(entry.runs_s.size());
        for (double v : entry.runs_s) entry.variance += (v - mean) * (v - mean);
        entry.variance /= static_cast<double>(entry.runs_s.size());
        table.push_back(std::move(entry));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct MetricsReport {
    std::map<std::string, double> per_domain;
    double macro_accuracy = 0.0;
    double sd = 0.0;
    double sc = 0.0;
    double stage1_wall_s = 0.0;
    std::string config_fingerprint;

    void validate() const {
        for (const auto& [name, acc] : per_domain)
            require(acc >= 0.0 && acc <= 1.0, ErrorCode::internal,
                    "accuracy out of range for domain " + name);
        require(macro_accuracy >= 0.0 && macro_accuracy <= 1.0, ErrorCode::internal,
                "macro accuracy out of range");
        require(sd >= 0.0 && sd <= 1.0, ErrorCode::internal, "SD out of range");
        require(sc >= -1.0 && sc <= 1.0, ErrorCode::internal, "SC out of range");
    }
};

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
    nlohmann::json per_domain = nlohmann::json::object();
    for (const auto& [name, acc] : r.per_domain) per_domain[name] = acc;
    return {{"per_domain_accuracy", per_domain},
            {"macro_accuracy", r.macro_accuracy},
            {"style_diversity", r.sd},
            {"semantic_consistency", r.sc},
            {"stage1_wall_s", r.stage1_wall_s},
            {"config_fingerprint", r.config_fingerprint}};
}

} // namespace stylegen
