#pragma once

// Coarse semantic generation: embed the category names, cluster them with
// KMeans++ under silhouette model selection, and extract up to C coarse
// strings per cluster through a pluggable extractor. A cluster whose
// extraction answers "nothing" is split in two and re-queried, recursing
// until success or singletons (which answer with their own name).
//
// Two extractors ship: the deterministic stub (the C member names nearest
// the cluster centroid — fully offline) and the LLM extractor, which sends
// the verbatim query
//   Q: Tell me {list of category names under a cluster} have in common
//   with three words. If not, it can be nothing.
// with the count word substituted when C != 3. LLM responses are cached by
// query hash; a cache file can be replayed without any transport, which is
// also how recorded fixtures are tested.

#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stylegen/cache.hpp"
#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"
#include "stylegen/kmeans.hpp"

namespace stylegen {

// ---------------------------------------------------------------------------
// Category names
// ---------------------------------------------------------------------------

inline std::string normalize_whitespace(const std::string& s) {
    std::string out;
    bool in_space = true; // trims leading space
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            out += c;
            in_space = false;
        }
    }
    return out;
}

struct CategorySet {
    std::vector<std::string> names;

    static CategorySet from_names(std::vector<std::string> raw) {
        CategorySet set;
        std::unordered_map<std::string, int> seen;
        for (auto& name : raw) {
            std::string canon = normalize_whitespace(name);
            require(!canon.empty(), ErrorCode::config, "category name is empty");
            require(seen.emplace(canon, 1).second, ErrorCode::config,
                    "duplicate category name: " + canon);
            set.names.push_back(std::move(canon));
        }
        require(!set.names.empty(), ErrorCode::config, "category set is empty");
        return set;
    }

    std::size_t size() const { return names.size(); }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct CsgConfig {
    int semantics_per_cluster = 3; // C
    int k_min = 2;
    int k_max = 20;
    int restarts = 10;
    std::string extractor_id = "stub"; // stub | llm
    std::string cache_path;            // LLM response cache / replay fixture
    std::string endpoint;              // http(s)://host:port/path
    std::string credential_env = "STYLEGEN_LLM_TOKEN";
    bool replay_only = false;          // never touch the network
    int fanout = 4;                    // concurrent cluster extractions (llm)
    std::uint64_t seed = 0;

    void validate() const {
        require(semantics_per_cluster >= 1, ErrorCode::config, "csg: C must be >= 1");
        require(k_min >= 2 && k_max >= k_min, ErrorCode::config,
                "csg: k range must satisfy 2 <= k_min <= k_max");
        require(restarts >= 1, ErrorCode::config, "csg: restarts must be >= 1");
        require(extractor_id == "stub" || extractor_id == "llm", ErrorCode::config,
                "csg: extractor must be stub or llm");
        require(fanout >= 1, ErrorCode::config, "csg: fanout must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// LLM query, response parsing, cache
// ---------------------------------------------------------------------------

inline std::string count_word(int c) {
    static const char* words[] = {"zero", "one", "two",   "three", "four", "five",
                                  "six",  "seven", "eight", "nine",  "ten"};
    if (c >= 0 && c <= 10) return words[c];
    return std::to_string(c);
}

inline std::string make_semantics_query(const std::vector<std::string>& members, int c) {
    std::string list = "[";
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (i) list += ", ";
        list += '"' + members[i] + '"';
    }
    list += ']';
    return "Q: Tell me " + list + " have in common with " + count_word(c) +
           " words. If not, it can be nothing.";
}

struct ExtractOutcome {
    std::vector<std::string> terms;
    bool nothing = false;
};

namespace detail {

inline std::string trim_term(std::string s) {
    auto is_junk = [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' ||
               c == '`' || c == '.' || c == '[' || c == ']';
    };
    std::size_t b = 0, e = s.size();
    while (b < e && is_junk(s[b])) ++b;
    while (e > b && is_junk(s[e - 1])) --e;
    s = s.substr(b, e - b);
    if (s.rfind("A:", 0) == 0 || s.rfind("a:", 0) == 0)
        return trim_term(s.substr(2));
    return s;
}

inline bool iequals(const std::string& a, const char* b) {
    std::size_t i = 0;
    for (; i < a.size() && b[i]; ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != b[i]) return false;
    return i == a.size() && b[i] == '\0';
}

} // namespace detail

// Up to C comma/newline-separated terms; "nothing" (case-insensitive, as
// the whole answer or any term) marks the no-common-semantics case. An
// answer with no usable terms is an error, never silently dropped.
inline ExtractOutcome parse_semantics_response(const std::string& response, int c) {
    ExtractOutcome out;
    std::vector<std::string> pieces;
    std::string current;
    for (char ch : response) {
         if (ch == ',' || ch == '\n') {
            pieces.push_back(current);
            current.clear();
        } else {
            current += ch;
        }
    }
    pieces.push_back(current);

    for (auto& piece : pieces) {
        std::string term = detail::trim_term(piece);
        if (term.empty()) continue;
        if (detail::iequals(term, "nothing")) {
            out.nothing = true;
            continue;
        }
        if (static_cast<int>(out.terms.size()) < c) out.terms.push_back(term);
    }
    if (out.nothing) {
        out.terms.clear();
        return out;
    }
    require(!out.terms.empty(), ErrorCode::parse,
            "unparseable semantics response: \"" + response + "\"");
    return out;
}

// Single-turn completion transport. The HTTP implementation lives in
// llm_client.hpp; tests use in-process fakes.
class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    virtual std::string complete(const std::string& query) = 0;
};

// Query-hash keyed response store, shared by caching and replay. Concurrent
// readers, serialized writers; every put rewrites the JSON file atomically.
class ResponseCache {
public:
    ResponseCache() = default;

    explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
        if (path_.empty() || !std::filesystem::exists(path_)) return;
        std::ifstream in(path_);
        require(in.good(), ErrorCode::io, "cannot read response cache: " + path_.string());
        const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        require(!j.is_discarded() && j.is_object(), ErrorCode::parse,
                "response cache is not a JSON object: " + path_.string());
        for (const auto& [key, value] : j.items()) entries_[key] = value.get<std::string>();
    }

    static std::string key_of(const std::string& query) { return to_hex(fnv1a64(query)); }

    std::optional<std::string> get(const std::string& query) const {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key_of(query));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& query, const std::string& response) {
        std::unique_lock lock(mutex_);
        entries_[key_of(query)] = response;
        if (path_.empty()) return;
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : entries_) j[k] = v;
        const std::string bytes = j.dump(2);
        namespace fs = std::filesystem;
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        const fs::path tmp = path_.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            require(out.good(), ErrorCode::io, "cannot write cache: " + tmp.string());
            out << bytes;
        }
        fs::rename(tmp, path_);
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

private:
    std::filesystem::path path_;
    std::unordered_map<std::string, std::string> entries_;
    mutable std::shared_mutex mutex_;
};

// Cache-through completion. With no transport it is a pure replay client:
// a miss is an error instead of a network call.
class CachedCompletion {
public:
    CachedCompletion(ResponseCache* cache, LlmTransport* transport)
        : cache_(cache), transport_(transport) {}

    std::string complete(const std::string& query) {
        if (cache_) {
            if (auto hit = cache_->get(query)) return *hit;
        }
        require(transport_ != nullptr, ErrorCode::llm,
                "replay cache miss and no transport configured (query: " + query + ")");
        std::string response = transport_->complete(query);
        ++transport_calls_;
        if (cache_) cache_->put(query, response);
        return response;
    }

    int transport_calls() const { return transport_calls_.load(); }

private:
    ResponseCache* cache_;
    LlmTransport* transport_;
    std::atomic<int> transport_calls_{0};
};

// ---------------------------------------------------------------------------
// Extractors
// ---------------------------------------------------------------------------

class CoarseExtractor {
public:
    virtual ~CoarseExtractor() = default;
    // `features` rows align with `members`.
    virtual ExtractOutcome extract(const std::vector<std::string>& members,
                                   const Matrix& features, int c) = 0;
};

// Offline extractor: the C member names whose embeddings are nearest the
// cluster centroid, ties broken by member order. Never answers "nothing".
class StubExtractor final : public CoarseExtractor {
public:
    ExtractOutcome extract(const std::vector<std::string>& members, const Matrix& features,
                           int c) override {
        require(!members.empty(), ErrorCode::config, "extract: empty cluster");
        require(features.rows == members.size(), ErrorCode::dimension,
                "extract: feature row per member required");
        Vec centroid(features.cols, 0.0);
        for (std::size_t i = 0; i < features.rows; ++i) axpy(1.0, features.row(i), centroid);
        for (double& v : centroid) v /= static_cast<double>(features.rows);

        std::vector<std::size_t> order(members.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return squared_distance(features.row(a), centroid) <
                   squared_distance(features.row(b), centroid);
        });

        ExtractOutcome out;
        for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < c; ++i)
            out.terms.push_back(members[order[i]]);
        return out;
    }
};

class LlmExtractor final : public CoarseExtractor {
public:
    explicit LlmExtractor(CachedCompletion& completion) : completion_(completion) {}

    ExtractOutcome extract(const std::vector<std::string>& members, const Matrix&,
                           int c) override {
        require(!members.empty(), ErrorCode::config, "extract: empty cluster");
        return parse_semantics_response(completion_.complete(make_semantics_query(members, c)),
                                        c);
    }

private:
    CachedCompletion& completion_;
};

// ---------------------------------------------------------------------------
// build_css
// ---------------------------------------------------------------------------

struct CoarseEntry {
    std::string coarse;
    int cluster_id = 0;
    std::vector<std::string> members;
};

struct CoarseSemanticSet {
    std::vector<CoarseEntry> entries;
    std::vector<std::string> css; // unique coarse strings, first-seen order
    int k_selected = 0;
    int binary_splits = 0;
    int llm_transport_calls = 0;
};

namespace detail {

struct ClusterNode {
    std::vector<std::size_t> member_rows;
    std::vector<std::string> terms; // leaf payload
    bool leaf = false;
    int splits_below = 0;
    std::vector<ClusterNode> children;
};

inline Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) out.set_row(i, m.row(rows[i]));
    return out;
}

// Extract a cluster, splitting in two and re-querying whenever the answer
// is "nothing". Recursion terminates at singletons, which stand for
// themselves without another query; a root cluster that happens to be a
// singleton still goes through the extractor first.
inline ClusterNode extract_tree(const std::vector<std::size_t>& member_rows,
                                const CategorySet& cats, const Matrix& features,
                                CoarseExtractor& extractor, const CsgConfig& cfg,
                                std::uint64_t node_seed, bool from_split) {
    ClusterNode node;
    node.member_rows = member_rows;

    std::vector<std::string> names;
    names.reserve(member_rows.size());
    for (std::size_t r : member_rows) names.push_back(cats.names[r]);

    if (from_split && member_rows.size() == 1) {
        node.leaf = true;
        node.terms.push_back(names[0]);
        return node;
    }

    const Matrix sub = take_rows(features, member_rows);
    ExtractOutcome outcome = extractor.extract(names, sub, cfg.semantics_per_cluster);
    if (!outcome.nothing) {
        node.leaf = true;
        for (auto& t : outcome.terms) {
            if (std::find(node.terms.begin(), node.terms.end(), t) == node.terms.end())
                node.terms.push_back(std::move(t));
        }
        return node;
    }
    if (member_rows.size() == 1) {
        node.leaf = true; // terminal rule: a singleton stands for itself
        node.terms.push_back(names[0]);
        return node;
    }

    KmeansResult split = kmeans_pp(sub, 2, mix64(node_seed ^ fnv1a64("binary-split")),
                                   cfg.restarts);
    node.splits_below = 1;
    for (int half = 0; half < 2; ++half) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < member_rows.size(); ++i)
            if (split.assignment[i] == half) rows.push_back(member_rows[i]);
        ClusterNode child =
            extract_tree(rows, cats, features, extractor, cfg,
                         mix64(node_seed + static_cast<std::uint64_t>(half) + 1), true);
        node.splits_below += child.splits_below;
        node.children.push_back(std::move(child));
    }
    return node;
}

inline void flatten_tree(const ClusterNode& node, const CategorySet& cats,
                         int root_id, int& next_id, bool is_root,
                         CoarseSemanticSet& out) {
    const int id = is_root ? root_id : next_id++;
    if (node.leaf) {
        for (const auto& term : node.terms) {
            CoarseEntry entry;
            entry.coarse = term;
            entry.cluster_id = id;
            for (std::size_t r : node.member_rows) entry.members.push_back(cats.names[r]);
            out.entries.push_back(std::move(entry));
        }
        return;
    }
    for (const auto& child : node.children)
        flatten_tree(child, cats, root_id, next_id, false, out);
}

} // namespace detail

// The full pipeline: embed -> select_k -> cluster -> extract per cluster,
// with the "nothing" -> binary re-cluster rule. N = 1 short-circuits to the
// category's own name; N = 2 cannot be clustered (k range [2, N-1] is
// empty) and is treated as one cluster.
inline CoarseSemanticSet build_css(const CategorySet& cats, const EncoderBackend& enc,
                                   CoarseExtractor& extractor, const CsgConfig& cfg,
                                   const FeatureCache* feature_cache = nullptr) {
    cfg.validate();
    const std::size_t n = cats.size();

    CoarseSemanticSet out;
    if (n == 1) {
        out.entries.push_back({cats.names[0], 0, {cats.names[0]}});
        out.css.push_back(cats.names[0]);
        out.k_selected = 1;
        return out;
    }

    // Embed every category name (content prompt), through the disk cache
    // when one is provided.
    Matrix features(n, static_cast<std::size_t>(enc.spec().joint_dim));
    const std::string param_key = encoder_param_key(enc.spec());
    for (std::size_t i = 0; i < n; ++i) {
        const PromptTemplate prompt =
            assemble_prompt(PromptKind::content, std::nullopt, cats.names[i]);
        if (feature_cache) {
            if (auto hit = feature_cache->get(enc.spec().backend_id, param_key, prompt.text())) {
                features.set_row(i, *hit);
                continue;
            }
        }
        JointFeature f = enc.encode_text(prompt);
        if (feature_cache)
            feature_cache->put(enc.spec().backend_id, param_key, prompt.text(), f.v);
        features.set_row(i, f.v);
    }

    // Root clustering.
    std::vector<std::vector<std::size_t>> roots;
    if (n == 2) {
        roots.push_back({0, 1});
        out.k_selected = 1;
    } else {
        KSearch search;
        search.k_min = cfg.k_min;
        search.k_max = std::min<int>(cfg.k_max, static_cast<int>(n) - 1);
        search.restarts = cfg.restarts;
        search.seed = mix64(cfg.seed ^ fnv1a64("select-k"));
        const int k = select_k(features, search);
        KmeansResult clustering =
            kmeans_pp(features, k, mix64(cfg.seed ^ fnv1a64("cluster")), cfg.restarts);
        roots.assign(static_cast<std::size_t>(k), {});
        for (std::size_t i = 0; i < n; ++i)
            roots[static_cast<std::size_t>(clustering.assignment[i])].push_back(i);
        out.k_selected = k;
    }

    // Extract each root cluster; different clusters may run concurrently
    // against the LLM endpoint (bounded fan-out), results are assembled in
    // cluster order either way.
    std::vector<detail::ClusterNode> trees(roots.size());
    auto run_root = [&](std::size_t r) {
        trees[r] = detail::extract_tree(roots[r], cats, features, extractor, cfg,
                                        mix64(cfg.seed + r), false);
    };
    if (cfg.extractor_id == "llm" && cfg.fanout > 1 && roots.size() > 1) {
        std::counting_semaphore<64> slots(std::min(cfg.fanout, 64));
        std::vector<std::future<void>> futures;
        futures.reserve(roots.size());
        for (std::size_t r = 0; r < roots.size(); ++r) {
            futures.push_back(std::async(std::launch::async, [&, r] {
                slots.acquire();
                struct Release {
                    std::counting_semaphore<64>* s;
                    ~Release() { s->release(); }
                } release{&slots};
                run_root(r);
            }));
        }
        for (auto& f : futures) f.get(); // rethrows extraction errors
    } else {
        for (std::size_t r = 0; r < roots.size(); ++r) run_root(r);
    }

    int next_id = static_cast<int>(roots.size());
    for (std::size_t r = 0; r < trees.size(); ++r) {
        detail::flatten_tree(trees[r], cats, static_cast<int>(r), next_id, true, out);
        out.binary_splits += trees[r].splits_below;
    }

    for (const auto& entry : out.entries) {
        require(!detail::iequals(entry.coarse, "nothing"), ErrorCode::internal,
                "build_css produced the sentinel term");
        if (std::find(out.css.begin(), out.css.end(), entry.coarse) == out.css.end())
            out.css.push_back(entry.coarse);
    }
    require(!out.css.empty(), ErrorCode::internal, "build_css produced an empty set");
    return out;
}

// Convenience wrapper owning the extractor plumbing for the common cases.
struct CsgRun {
    CoarseSemanticSet css;
    int transport_calls = 0;
};

inline CsgRun run_csg(const CategorySet& cats, const EncoderBackend& enc,
                      const CsgConfig& cfg, LlmTransport* transport = nullptr,
                      const FeatureCache* feature_cache = nullptr) {
    cfg.validate();
    CsgRun run;
    if (cfg.extractor_id == "stub") {
        StubExtractor extractor;
        run.css = build_css(cats, enc, extractor, cfg, feature_cache);
        return run;
    }
    ResponseCache cache(cfg.cache_path.empty() ? std::filesystem::path{}
                                               : std::filesystem::path(cfg.cache_path));
    require(!cfg.replay_only || !cfg.cache_path.empty(), ErrorCode::config,
            "replay mode needs a cache/fixture path");
    CachedCompletion completion(cfg.cache_path.empty() ? nullptr : &cache,
                                cfg.replay_only ? nullptr : transport);
    LlmExtractor extractor(completion);
    run.css = build_css(cats, enc, extractor, cfg, feature_cache);
    run.css.llm_transport_calls = completion.transport_calls();
    run.transport_calls = completion.transport_calls();
    return run;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline nlohmann::json css_to_json(const CoarseSemanticSet& set) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : set.entries)
        entries.push_back({{"coarse", e.coarse},
                           {"cluster_id", e.cluster_id},
                           {"members", e.members}});
    return {{"css", set.css},
            {"entries", entries},
            {"k_selected", set.k_selected},
            {"binary_splits", set.binary_splits}};
}

inline CoarseSemanticSet css_from_json(const nlohmann::json& j) {
    CoarseSemanticSet set;
    set.css = j.at("css").get<std::vector<std::string>>();
    set.k_selected = j.value("k_selected", 0);
    set.binary_splits = j.value("binary_splits", 0);
    for (const auto& e : j.at("entries")) {
        set.entries.push_back({e.at("coarse").get<std::string>(),
                               e.at("cluster_id").get<int>(),
                               e.at("members").get<std::vector<std::string>>()});
    }
    require(!set.css.empty(), ErrorCode::parse, "css file has no entries");
    return set;
}

inline void save_css(const std::filesystem::path& path, const CoarseSemanticSet& set) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::io, "cannot write css: " + path.string());
    out << css_to_json(set).dump(2) << '\n';
}

inline CoarseSemanticSet load_css(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::missing_input, "cannot open css: " + path.string());
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    require(!j.is_discarded(), ErrorCode::parse, "css is not valid JSON: " + path.string());
    return css_from_json(j);
}

} // namespace stylegen
