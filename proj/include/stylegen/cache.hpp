#pragma once

// On-disk feature cache: one array container per encoded prompt, keyed by
// (backend id, parameter key, prompt text). The parameter key is the seed
// for the mock backend and a weights hash for external ones, so a cache
// can never serve features from a different encoder.

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "stylegen/array_io.hpp"
#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"

namespace stylegen {

class FeatureCache {
public:
    explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<Vec> get(const std::string& backend_id, const std::string& param_key,
                           const std::string& prompt_text) const {
        const auto path = path_for(backend_id, param_key, prompt_text);
        if (!std::filesystem::exists(path)) return std::nullopt;
        LoadedArray arr = load_array(path);
        const nlohmann::json meta = nlohmann::json::parse(arr.metadata, nullptr, false);
        if (meta.is_discarded() || meta.value("backend", "") != backend_id ||
            meta.value("params", "") != param_key || meta.value("prompt", "") != prompt_text)
            return std::nullopt; // hash collision or foreign file
        return arr.f64;
    }

    void put(const std::string& backend_id, const std::string& param_key,
             const std::string& prompt_text, std::span<const double> feature) const {
        const nlohmann::json meta = {
            {"backend", backend_id}, {"params", param_key}, {"prompt", prompt_text}};
        const std::uint64_t shape[1] = {feature.size()};
        save_array(path_for(backend_id, param_key, prompt_text), shape, feature, meta.dump());
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path path_for(const std::string& backend_id,
                                   const std::string& param_key,
                                   const std::string& prompt_text) const {
        const std::string key =
            backend_id + '\x1f' + param_key + '\x1f' + prompt_text;
        return dir_ / (to_hex(fnv1a64(key)) + ".arr");
    }

    std::filesystem::path dir_;
};

// The cache key component describing the encoder parameters.
inline std::string encoder_param_key(const EncoderSpec& spec) {
    return to_hex(mix64(spec.seed ^ static_cast<std::uint64_t>(spec.joint_dim)) ^
                  static_cast<std::uint64_t>(spec.token_dim));
}

} // namespace stylegen
