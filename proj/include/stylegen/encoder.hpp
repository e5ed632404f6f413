#pragma once

// Prompt assembly and the encoder backend interface.
//
// A backend maps token sequences (with one optional learnable pseudo-word
// slot) to unit-norm features in a shared text/image joint space, and
// exposes the gradient of that map with respect to the pseudo-word
// embedding. Backends are frozen: encoding never mutates them.
//
// The built-in "mock" backend is a pure deterministic function of
// (seed, tokens, theta):
//   token id            = fnv1a64(token text)
//   token embedding[d]  = N(0,1) draw keyed by (seed, token id, d), / sqrt(D)
//   sequence vector     = mean of token embeddings, theta at the slot
//   joint feature       = normalize(A * sequence), A a seeded P x D Gaussian
// which is smooth in theta with a closed-form vector-Jacobian product.
//
// An adapter for a real pretrained contrastive vision-language encoder pair
// can be registered under the id "external-vlm"; none ships in-tree.

#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stylegen/common.hpp"

namespace stylegen {

enum class PromptKind { style, content, style_content };
enum class FeatureKind { style, content, style_content, image };

inline FeatureKind feature_kind_of(PromptKind k) {
    switch (k) {
    case PromptKind::style: return FeatureKind::style;
    case PromptKind::content: return FeatureKind::content;
    default: return FeatureKind::style_content;
    }
}

inline const char* to_string(PromptKind k) {
    switch (k) {
    case PromptKind::style: return "style";
    case PromptKind::content: return "content";
    default: return "style-content";
    }
}

struct PromptTemplate {
    PromptKind kind = PromptKind::content;
    std::vector<std::string> tokens;
    std::optional<std::size_t> pseudo_slot; // index into tokens
    std::optional<std::size_t> class_pos;   // index of the first class token
    std::optional<int> style_index;
    std::optional<std::string> class_name;

    bool has_slot() const { return pseudo_slot.has_value(); }

    std::string text() const {
        std::string out;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) out += ' ';
            out += tokens[i];
        }
        return out;
    }
};

inline std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Canonical prompts: "a <Si> style of a", "<class>", "a <Si> style of a <class>".
inline PromptTemplate assemble_prompt(PromptKind kind,
                                      std::optional<int> style_index = std::nullopt,
                                      std::optional<std::string> class_name = std::nullopt) {
    const bool wants_style = kind != PromptKind::content;
    const bool wants_class = kind != PromptKind::style;
    require(style_index.has_value() == wants_style, ErrorCode::config,
            wants_style ? "prompt kind requires a style index"
                        : "content prompt takes no style index");
    require(class_name.has_value() == wants_class, ErrorCode::config,
            wants_class ? "prompt kind requires a class name"
                        : "style prompt takes no class name");

    PromptTemplate prompt;
    prompt.kind = kind;
    if (wants_style) {
        prompt.tokens = {"a", "<S" + std::to_string(*style_index) + ">", "style", "of", "a"};
        prompt.pseudo_slot = 1;
        prompt.style_index = style_index;
    }
    if (wants_class) {
        auto class_tokens = split_tokens(*class_name);
        require(!class_tokens.empty(), ErrorCode::config, "class name is empty");
        prompt.class_pos = prompt.tokens.size();
        prompt.tokens.insert(prompt.tokens.end(), class_tokens.begin(), class_tokens.end());
        prompt.class_name = class_name;
    }
    return prompt;
}

struct EncoderSpec {
    std::string backend_id = "mock";
    int joint_dim = 64;  // P
    int token_dim = 32;  // D
    std::uint64_t seed = 0;
    // External backends only; the mock ignores these.
    int image_side = 224;
    std::vector<double> image_mean = {0.48145466, 0.4578275, 0.40821073};
    std::vector<double> image_std = {0.26862954, 0.26130258, 0.27577711};

    void validate() const {
        require(joint_dim > 0 && token_dim > 0, ErrorCode::config,
                "encoder dims must be positive");
        require(!backend_id.empty(), ErrorCode::config, "backend id is empty");
    }
};

struct JointFeature {
    Vec v;
    FeatureKind kind = FeatureKind::content;
};

// Feature plus the VJP through the encoder: grad_theta(u) = d(u . f)/d(theta).
struct TextEncoding {
    JointFeature feature;
    std::function<Vec(std::span<const double>)> grad_theta;
};

// A manifest record's image payload. The mock backend synthesizes the image
// feature from (class_name, sigma, seed); an external backend decodes `path`.
struct ImageRef {
    std::string class_name;
    std::string path;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual const EncoderSpec& spec() const = 0;
    virtual JointFeature encode_text(const PromptTemplate& prompt,
                                     std::span<const double> theta = {}) const = 0;
    virtual TextEncoding encode_text_traced(const PromptTemplate& prompt,
                                            std::span<const double> theta) const = 0;
    virtual JointFeature encode_image(const ImageRef& image) const = 0;
    // Checksum over everything the backend treats as parameters; trainers
    // assert it is unchanged across a run.
    virtual std::uint64_t parameter_checksum() const = 0;
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr std::uint64_t kTokenTag = fnv1a64("mock/token");
inline constexpr std::uint64_t kProjTag = fnv1a64("mock/projection");
inline constexpr std::uint64_t kImageTag = fnv1a64("mock/image-noise");
} // namespace detail

class MockEncoder final : public EncoderBackend {
public:
    explicit MockEncoder(EncoderSpec spec, std::vector<std::string> vocabulary = {})
        : spec_(std::move(spec)), vocabulary_(vocabulary.begin(), vocabulary.end()) {
        spec_.validate();
        require(spec_.backend_id == "mock", ErrorCode::config,
                "MockEncoder requires backend_id \"mock\"");
        const auto p = static_cast<std::size_t>(spec_.joint_dim);
        const auto d = static_cast<std::size_t>(spec_.token_dim);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        projection_ = Matrix(p, d);
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < d; ++c)
                projection_(r, c) =
                    gaussian_at(spec_.seed ^ detail::kProjTag, r, c) * inv_sqrt_d;
    }

    const EncoderSpec& spec() const override { return spec_; }

    JointFeature encode_text(const PromptTemplate& prompt,
                             std::span<const double> theta = {}) const override {
        Vec z = project(sequence_mean(prompt, theta));
        const double n = norm(z);
        require(n > 0.0, ErrorCode::degenerate_input, "mock encoder: zero feature");
        for (double& x : z) x /= n;
        return {std::move(z), feature_kind_of(prompt.kind)};
    }

    TextEncoding encode_text_traced(const PromptTemplate& prompt,
                                    std::span<const double> theta) const override {
        require(prompt.has_slot(), ErrorCode::config,
                "traced encoding needs a pseudo-word slot");
        Vec z = project(sequence_mean(prompt, theta));
        const double n = norm(z);
        require(n > 0.0, ErrorCode::degenerate_input, "mock encoder: zero feature");
        Vec f = z;
        for (double& x : f) x /= n;

        // f = z/|z|, z = A m, dm/dtheta = I/T. For upstream u:
        //   dL/dtheta = (1/T) A^T (u/|z| - z (z.u)/|z|^3)
        const double token_count = static_cast<double>(prompt.tokens.size());
        TextEncoding out{{std::move(f), feature_kind_of(prompt.kind)}, nullptr};
        out.grad_theta = [this, z = std::move(z), n, token_count](
                             std::span<const double> upstream) -> Vec {
            require(upstream.size() == z.size(), ErrorCode::dimension,
                    "grad_theta: upstream size mismatch");
            const double zu = dot(z, upstream);
            Vec w(z.size());
            const double inv_n = 1.0 / n;
            const double inv_n3 = inv_n * inv_n * inv_n;
            for (std::size_t i = 0; i < z.size(); ++i)
                w[i] = upstream[i] * inv_n - z[i] * zu * inv_n3;
            Vec g(projection_.cols, 0.0);
            for (std::size_t r = 0; r < projection_.rows; ++r)
                axpy(w[r] / token_count, projection_.row(r), g);
            return g;
        };
        return out;
    }

    JointFeature encode_image(const ImageRef& image) const override {
        require(image.sigma >= 0.0, ErrorCode::config, "image noise sigma must be >= 0");
        if (!vocabulary_.empty()) {
            require(vocabulary_.count(image.class_name) > 0, ErrorCode::config,
                    "unknown class name: " + image.class_name);
        }
        JointFeature content =
            encode_text(assemble_prompt(PromptKind::content, std::nullopt, image.class_name));
        // Synthetic domain shift around the class's text feature. The noise
        // direction has expected unit norm, so sigma is scale-free in P.
        if (image.sigma > 0.0) {
            const auto p = static_cast<std::size_t>(spec_.joint_dim);
            const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(p));
            for (std::size_t i = 0; i < p; ++i)
                content.v[i] += image.sigma * inv_sqrt_p *
                                gaussian_at(spec_.seed ^ detail::kImageTag, image.seed, i);
            normalize(content.v);
        }
        content.kind = FeatureKind::image;
        return content;
    }

    std::uint64_t parameter_checksum() const override {
        std::uint64_t h = mix64(fnv1a64(spec_.backend_id) ^ spec_.seed);
        h = mix64(h ^ static_cast<std::uint64_t>(spec_.joint_dim));
        h = mix64(h ^ static_cast<std::uint64_t>(spec_.token_dim));
        for (double v : projection_.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = mix64(h ^ bits);
        }
        return h;
    }

    // Visible for oracle tests: the deterministic per-token embedding.
    Vec token_embedding(const std::string& token) const {
        const auto d = static_cast<std::size_t>(spec_.token_dim);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        const std::uint64_t id = fnv1a64(token);
        Vec e(d);
        for (std::size_t i = 0; i < d; ++i)
            e[i] = gaussian_at(spec_.seed ^ detail::kTokenTag, id, i) * inv_sqrt_d;
        return e;
    }

private:
    Vec sequence_mean(const PromptTemplate& prompt, std::span<const double> theta) const {
        require(!prompt.tokens.empty(), ErrorCode::config, "empty prompt");
        require(prompt.has_slot() == !theta.empty(), ErrorCode::config,
                prompt.has_slot() ? "prompt has a pseudo-word slot but no theta given"
                                  : "theta given for a prompt without a slot");
        const auto d = static_cast<std::size_t>(spec_.token_dim);
        if (prompt.has_slot())
            require(theta.size() == d, ErrorCode::dimension,
                    "theta dimension does not match token_dim");
        Vec m(d, 0.0);
        for (std::size_t t = 0; t < prompt.tokens.size(); ++t) {
            if (prompt.pseudo_slot && *prompt.pseudo_slot == t) {
                axpy(1.0, theta, m);
            } else {
                axpy(1.0, token_embedding(prompt.tokens[t]), m);
            }
        }
        const double inv_t = 1.0 / static_cast<double>(prompt.tokens.size());
        for (double& x : m) x *= inv_t;
        return m;
    }

    Vec project(const Vec& m) const {
        Vec z(projection_.rows, 0.0);
        for (std::size_t r = 0; r < projection_.rows; ++r) z[r] = dot(projection_.row(r), m);
        return z;
    }

    EncoderSpec spec_;
    std::set<std::string> vocabulary_;
    Matrix projection_; // P x D
};

// ---------------------------------------------------------------------------
// Backend registry
// ---------------------------------------------------------------------------

using BackendFactory =
    std::function<std::unique_ptr<EncoderBackend>(const EncoderSpec&)>;

inline std::map<std::string, BackendFactory>& backend_registry() {
    static std::map<std::string, BackendFactory> registry;
    return registry;
}

inline void register_backend(const std::string& id, BackendFactory factory) {
    backend_registry()[id] = std::move(factory);
}

inline std::unique_ptr<EncoderBackend> make_backend(const EncoderSpec& spec,
                                                    std::vector<std::string> vocabulary = {}) {
    spec.validate();
    if (spec.backend_id == "mock")
        return std::make_unique<MockEncoder>(spec, std::move(vocabulary));
    auto it = backend_registry().find(spec.backend_id);
    if (it != backend_registry().end()) return it->second(spec);
    if (spec.backend_id == "external-vlm")
        fail(ErrorCode::missing_input,
             "backend \"external-vlm\" needs a plugin that loads pretrained "
             "encoder weights; register one with register_backend()");
    fail(ErrorCode::config, "unknown backend id: " + spec.backend_id);
}

} // namespace stylegen
