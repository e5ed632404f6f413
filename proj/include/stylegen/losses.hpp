#pragma once

// Stage-1 losses and their analytic gradients.
//
// Feature-space pieces (cross-entropy against the fixed templates, pairwise
// |cos| diversity penalty) are exposed separately from the theta-space
// compositions that chain through the encoder's VJP, so each layer can be
// checked against finite differences and brute-force oracles on its own.
//
// Sum/mean conventions follow the definitions: the template cross-entropy
// is a mean over the batch, the consistency and diversity losses are sums
// over their index sets.

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"
#include "stylegen/etf.hpp"

namespace stylegen {

struct FeatureLoss {
    double value = 0.0;
    Matrix dfeatures; // same shape as the feature batch
};

// Softmax cross-entropy over logits s * <template_j, feature_b>, averaged
// over the batch. Labels index templates ("assign labels to each template
// in sequence": style i carries label i).
inline FeatureLoss etf_cross_entropy(const Matrix& features, const EtfTemplate& etf,
                                     std::span<const int> labels, double logit_scale,
                                     bool with_grad = true) {
    const std::size_t batch = features.rows;
    const std::size_t k = etf.vectors.rows;
    require(batch > 0, ErrorCode::config, "etf_cross_entropy: empty batch");
    require(labels.size() == batch, ErrorCode::dimension,
            "etf_cross_entropy: one label per feature required");
    require(features.cols == etf.vectors.cols, ErrorCode::dimension,
            "etf_cross_entropy: feature dim does not match template dim");

    FeatureLoss out;
    if (with_grad) out.dfeatures = Matrix(batch, features.cols);

    Vec logits(k), probs(k);
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        require(label >= 0 && static_cast<std::size_t>(label) < k, ErrorCode::config,
                "etf_cross_entropy: label out of range");
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            logits[j] = logit_scale * dot(etf.vectors.row(j), features.row(b));
            max_logit = std::max(max_logit, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs[j] = std::exp(logits[j] - max_logit);
            denom += probs[j];
        }
        out.value += std::log(denom) + max_logit - logits[static_cast<std::size_t>(label)];
        if (with_grad) {
            auto grad = out.dfeatures.row(b);
            for (std::size_t j = 0; j < k; ++j) {
                const double coeff =
                    logit_scale * (probs[j] / denom - (j == static_cast<std::size_t>(label)));
                axpy(coeff / static_cast<double>(batch), etf.vectors.row(j), grad);
            }
        }
    }
    out.value /= static_cast<double>(batch);
    return out;
}

// Sum of |cos| over unordered feature pairs; K identical features score
// K(K-1)/2, mutually orthogonal ones score 0.
inline double style_diversity_penalty(const Matrix& features) {
    require(features.rows >= 2, ErrorCode::config,
            "style_diversity_penalty: needs at least two features");
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i)
        for (std::size_t j = i + 1; j < features.rows; ++j)
            total += std::abs(cosine(features.row(i), features.row(j)));
    return total;
}

namespace detail {

// d cos(a, b) / da, full quotient rule (no unit-norm assumption).
inline void add_dcos_da(double weight, std::span<const double> a,
                        std::span<const double> b, std::span<double> out) {
    const double na = norm(a), nb = norm(b);
    const double c = dot(a, b) / (na * nb);
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] += weight * (b[i] / nb - c * a[i] / na) / na;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Theta-space losses (chained through the encoder VJP)
// ---------------------------------------------------------------------------

// Per-run cache of class content features; they do not depend on theta,
// so each name is encoded once.
class ContentFeatureCache {
public:
    explicit ContentFeatureCache(const EncoderBackend& enc) : enc_(enc) {}

    const Vec& get(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        JointFeature f = enc_.encode_text(assemble_prompt(PromptKind::content, std::nullopt, name));
        return cache_.emplace(name, std::move(f.v)).first->second;
    }

private:
    const EncoderBackend& enc_;
    std::unordered_map<std::string, Vec> cache_;
};

struct ThetaLoss {
    double value = 0.0;
    Matrix dtheta; // rows align with the theta rows passed in
};

// Style features for the given theta rows, as a batch matrix.
inline Matrix encode_style_features(const Matrix& theta, std::span<const int> style_indices,
                                    const EncoderBackend& enc) {
    require(theta.rows == style_indices.size(), ErrorCode::dimension,
            "encode_style_features: one index per theta row");
    Matrix out(theta.rows, static_cast<std::size_t>(enc.spec().joint_dim));
    for (std::size_t r = 0; r < theta.rows; ++r) {
        JointFeature f =
            enc.encode_text(assemble_prompt(PromptKind::style, style_indices[r]), theta.row(r));
        out.set_row(r, f.v);
    }
    return out;
}

// L_CE as a function of theta: encode style prompts, score against the
// fixed templates, backpropagate into each style's embedding.
inline ThetaLoss etf_ce_loss(const Matrix& theta, std::span<const int> style_indices,
                             const EtfTemplate& etf, double logit_scale,
                             const EncoderBackend& enc, bool with_grad = true) {
    require(theta.rows == style_indices.size(), ErrorCode::dimension,
            "etf_ce_loss: one style index per theta row");
    const std::size_t batch = theta.rows;
    std::vector<TextEncoding> traced;
    traced.reserve(batch);
    Matrix features(batch, static_cast<std::size_t>(enc.spec().joint_dim));
    for (std::size_t r = 0; r < batch; ++r) {
        if (with_grad) {
            traced.push_back(
                enc.encode_text_traced(assemble_prompt(PromptKind::style, style_indices[r]),
                                       theta.row(r)));
            features.set_row(r, traced.back().feature.v);
        } else {
            features.set_row(
                r, enc.encode_text(assemble_prompt(PromptKind::style, style_indices[r]),
                                   theta.row(r))
                       .v);
        }
    }
    FeatureLoss fl = etf_cross_entropy(features, etf, style_indices, logit_scale, with_grad);
    ThetaLoss out;
    out.value = fl.value;
    if (with_grad) {
        out.dtheta = Matrix(theta.rows, theta.cols);
        for (std::size_t r = 0; r < batch; ++r)
            out.dtheta.set_row(r, traced[r].grad_theta(fl.dfeatures.row(r)));
    }
    return out;
}

// Consistency loss sum_{i, c} -cos(f_content(c), f_style_content(theta_i, c)).
// With `names` = the coarse semantic set this is the coarse consistency
// loss; with the full fine-grained category list it is the baseline
// content loss.
inline ThetaLoss semantic_consistency_loss(const Matrix& theta,
                                           std::span<const int> style_indices,
                                           const std::vector<std::string>& names,
                                           const EncoderBackend& enc,
                                           ContentFeatureCache& content,
                                           bool with_grad = true) {
    require(theta.rows == style_indices.size(), ErrorCode::dimension,
            "semantic_consistency_loss: one style index per theta row");
    require(!names.empty(), ErrorCode::config, "semantic_consistency_loss: empty name set");

    ThetaLoss out;
    if (with_grad) out.dtheta = Matrix(theta.rows, theta.cols);
    Vec upstream(static_cast<std::size_t>(enc.spec().joint_dim));
    for (std::size_t r = 0; r < theta.rows; ++r) {
        for (const std::string& name : names) {
            const Vec& fc = content.get(name);
            const PromptTemplate prompt =
                assemble_prompt(PromptKind::style_content, style_indices[r], name);
            if (with_grad) {
                TextEncoding traced = enc.encode_text_traced(prompt, theta.row(r));
                out.value -= cosine(fc, traced.feature.v);
                std::fill(upstream.begin(), upstream.end(), 0.0);
                detail::add_dcos_da(-1.0, traced.feature.v, fc, upstream);
                axpy(1.0, traced.grad_theta(upstream), out.dtheta.row(r));
            } else {
                out.value -= cosine(fc, enc.encode_text(prompt, theta.row(r)).v);
            }
        }
    }
    return out;
}

// Diversity loss sum |cos| between batch styles and a set of reference
// style features. Pairs inside the batch propagate gradient to both ends;
// pairs against reference rows (any row whose index is not in the batch)
// only to the batch end. Each unordered pair is counted once. Passing all
// K current features as `reference` with the full batch reproduces the
// full pairwise objective; passing rows 0..i-1 with batch {i} reproduces
// the one-by-one schedule's term.
inline ThetaLoss style_diversity_loss(const Matrix& theta,
                                      std::span<const int> batch_indices,
                                      const Matrix& reference,
                                      const EncoderBackend& enc, bool with_grad = true) {
    require(theta.rows == batch_indices.size(), ErrorCode::dimension,
            "style_diversity_loss: one global index per theta row");

    const std::size_t batch = theta.rows;
    std::vector<TextEncoding> traced(batch);
    Matrix features(batch, static_cast<std::size_t>(enc.spec().joint_dim));
    for (std::size_t r = 0; r < batch; ++r) {
        if (with_grad) {
            traced[r] = enc.encode_text_traced(
                assemble_prompt(PromptKind::style, batch_indices[r]), theta.row(r));
            features.set_row(r, traced[r].feature.v);
        } else {
            features.set_row(
                r, enc.encode_text(assemble_prompt(PromptKind::style, batch_indices[r]),
                                   theta.row(r))
                       .v);
        }
    }

    ThetaLoss out;
    Matrix dfeat(batch, features.cols);

    auto sign_of = [](double c) { return c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0); };

    // In-batch pairs.
    for (std::size_t a = 0; a < batch; ++a) {
        for (std::size_t b = a + 1; b < batch; ++b) {
            const double c = cosine(features.row(a), features.row(b));
            out.value += std::abs(c);
            if (with_grad) {
                detail::add_dcos_da(sign_of(c), features.row(a), features.row(b), dfeat.row(a));
                detail::add_dcos_da(sign_of(c), features.row(b), features.row(a), dfeat.row(b));
            }
        }
    }
    // Batch vs reference rows outside the batch.
    for (std::size_t a = 0; a < batch; ++a) {
        for (std::size_t j = 0; j < reference.rows; ++j) {
            bool in_batch = false;
            for (int g : batch_indices)
                if (static_cast<std::size_t>(g) == j) { in_batch = true; break; }
            if (in_batch) continue;
            const double c = cosine(features.row(a), reference.row(j));
            out.value += std::abs(c);
            if (with_grad)
                detail::add_dcos_da(sign_of(c), features.row(a), reference.row(j), dfeat.row(a));
        }
    }

    if (with_grad) {
        out.dtheta = Matrix(theta.rows, theta.cols);
        for (std::size_t r = 0; r < batch; ++r)
            out.dtheta.set_row(r, traced[r].grad_theta(dfeat.row(r)));
    }
    return out;
}

// L_prompt = L_style + lambda * L_content over the given batch.
inline ThetaLoss baseline_prompt_loss(const Matrix& theta, std::span<const int> batch_indices,
                                      const Matrix& reference_features,
                                      const std::vector<std::string>& categories,
                                      double lambda, const EncoderBackend& enc,
                                      ContentFeatureCache& content, double* style_part = nullptr,
                                      double* content_part = nullptr, bool with_grad = true) {
    require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::config,
            "baseline_prompt_loss: lambda must lie in [0, 1]");
    ThetaLoss style =
        style_diversity_loss(theta, batch_indices, reference_features, enc, with_grad);
    if (style_part) *style_part = style.value;
    if (lambda == 0.0) {
        if (content_part) *content_part = 0.0;
        return style;
    }
    ThetaLoss cons =
        semantic_consistency_loss(theta, batch_indices, categories, enc, content, with_grad);
    if (content_part) *content_part = cons.value;
    ThetaLoss out;
    out.value = style.value + lambda * cons.value;
    if (with_grad) {
        out.dtheta = std::move(style.dtheta);
        for (std::size_t i = 0; i < out.dtheta.data.size(); ++i)
            out.dtheta.data[i] += lambda * cons.dtheta.data[i];
    }
    return out;
}

} // namespace stylegen
