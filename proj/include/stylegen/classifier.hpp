#pragma once

// Stage 2: synthesize the (style x class) feature training set and fit a
// linear head with ArcFace loss (softmax cross-entropy on scaled cosine
// logits, additive angular margin on the true class). Weight rows are
// stored unnormalized and normalized on the fly inside the loss and at
// inference.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"
#include "stylegen/optim.hpp"

namespace stylegen {

struct ClassifierConfig {
    int epochs = 50;
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 128;
    double arcface_scale = 5.0;  // s
    double arcface_margin = 0.5; // m, radians
    double init_std = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        require(epochs >= 1 && batch_size >= 1, ErrorCode::config,
                "classifier: epochs and batch size must be positive");
        require(lr >= 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorCode::config,
                "classifier: invalid optimizer settings");
        require(arcface_scale > 0.0, ErrorCode::config, "classifier: scale must be > 0");
        require(arcface_margin >= 0.0 && arcface_margin < std::numbers::pi / 2.0,
                ErrorCode::config, "classifier: margin must lie in [0, pi/2)");
        require(init_std > 0.0, ErrorCode::config, "classifier: init std must be > 0");
    }
};

struct LinearHead {
    Matrix weights; // N x P, unnormalized
    std::vector<std::string> class_names;
};

struct LabeledFeatures {
    Matrix features; // rows x P, unit norm
    std::vector<int> labels;
};

// One style-content feature per (style, class) pair, labeled by the class.
// Uses the fine-grained class list: coarse semantics are a stage-1 device.
inline LabeledFeatures synth_training_set(const Matrix& theta,
                                          const std::vector<std::string>& class_names,
                                          const EncoderBackend& enc) {
    require(theta.rows >= 1, ErrorCode::config, "synth_training_set: no styles");
    require(class_names.size() >= 2, ErrorCode::config,
            "synth_training_set: needs at least two classes");
    LabeledFeatures set;
    set.features = Matrix(theta.rows * class_names.size(),
                          static_cast<std::size_t>(enc.spec().joint_dim));
    set.labels.reserve(set.features.rows);
    std::size_t row = 0;
    for (std::size_t i = 0; i < theta.rows; ++i) {
        for (std::size_t c = 0; c < class_names.size(); ++c, ++row) {
            JointFeature f = enc.encode_text(
                assemble_prompt(PromptKind::style_content, static_cast<int>(i), class_names[c]),
                theta.row(i));
            set.features.set_row(row, f.v);
            set.labels.push_back(static_cast<int>(c));
        }
    }
    return set;
}

struct ArcfaceLoss {
    double value = 0.0;
    Matrix dweights; // N x P
};

// Mean cross-entropy over logits s*cos(theta_j), with the true-class angle
// increased by m while theta_y + m < pi. cos(theta_y) is clamped away from
// the poles before arccos so the derivative stays bounded. m = 0 reduces
// exactly to cosine-softmax cross-entropy.
inline ArcfaceLoss arcface_loss(const Matrix& weights, const Matrix& features,
                                std::span<const int> labels, double s, double m,
                                bool with_grad = true) {
    const std::size_t n = weights.rows;
    const std::size_t batch = features.rows;
    require(batch > 0, ErrorCode::config, "arcface_loss: empty batch");
    require(labels.size() == batch, ErrorCode::dimension, "arcface_loss: label count");
    require(weights.cols == features.cols, ErrorCode::dimension,
            "arcface_loss: weight/feature dim mismatch");
    require(s > 0.0 && m >= 0.0 && m < std::numbers::pi / 2.0, ErrorCode::config,
            "arcface_loss: invalid s or m");

    constexpr double kClamp = 1.0 - 1e-7;

    Vec row_norm(n);
    for (std::size_t j = 0; j < n; ++j) {
        row_norm[j] = norm(weights.row(j));
        require(row_norm[j] > 0.0, ErrorCode::degenerate_input,
                "arcface_loss: zero weight row");
    }

    ArcfaceLoss out;
    if (with_grad) out.dweights = Matrix(n, weights.cols);

    Vec cos_j(n), logits(n), probs(n);
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        require(label >= 0 && static_cast<std::size_t>(label) < n, ErrorCode::config,
                "arcface_loss: label out of range");
        const auto y = static_cast<std::size_t>(label);

        for (std::size_t j = 0; j < n; ++j) {
            cos_j[j] = dot(weights.row(j), features.row(b)) / row_norm[j];
            logits[j] = s * cos_j[j];
        }

        double margin_factor = 1.0; // d(logit_y)/d(cos_y) divided by s
        if (m > 0.0) {
            const double cy = std::clamp(cos_j[y], -kClamp, kClamp);
            const double theta_y = std::acos(cy);
            if (theta_y + m < std::numbers::pi) {
                logits[y] = s * std::cos(theta_y + m);
                margin_factor = std::sin(theta_y + m) / std::sin(theta_y);
            }
        }

        double max_logit = -std::numeric_limits<double>::infinity();
        for (double l : logits) max_logit = std::max(max_logit, l);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            probs[j] = std::exp(logits[j] - max_logit);
            denom += probs[j];
        }
        out.value += std::log(denom) + max_logit - logits[y];

        if (with_grad) {
            for (std::size_t j = 0; j < n; ++j) {
                double coeff = (probs[j] / denom - (j == y)) * s / static_cast<double>(batch);
                if (j == y) coeff *= margin_factor;
                // d cos_j / d w_j = (x - cos_j * w_j/|w_j|) / |w_j|
                auto g = out.dweights.row(j);
                const double inv = 1.0 / row_norm[j];
                for (std::size_t d = 0; d < weights.cols; ++d)
                    g[d] += coeff * inv *
                            (features(b, d) - cos_j[j] * weights(j, d) * inv);
            }
        }
    }
    out.value /= static_cast<double>(batch);
    return out;
}

struct ClassifierEpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
};

struct TrainLinearResult {
    LinearHead head;
    std::vector<ClassifierEpochRecord> history;
    double wall_s = 0.0;
};

inline TrainLinearResult train_linear(const ClassifierConfig& cfg,
                                      const LabeledFeatures& set,
                                      std::vector<std::string> class_names) {
    cfg.validate();
    require(set.features.rows > 0, ErrorCode::config, "train_linear: empty training set");
    require(set.labels.size() == set.features.rows, ErrorCode::dimension,
            "train_linear: label count mismatch");
    const std::size_t n = class_names.size();
    for (int l : set.labels)
        require(l >= 0 && static_cast<std::size_t>(l) < n, ErrorCode::config,
                "train_linear: label outside the class list");

    const auto start = std::chrono::steady_clock::now();
    SeededRng rng(mix64(cfg.seed ^ fnv1a64("linear-head")));

    TrainLinearResult res;
    res.head.class_names = std::move(class_names);
    res.head.weights = Matrix(n, set.features.cols);
    for (double& w : res.head.weights.data) w = cfg.init_std * rng.gaussian();

    SgdMomentum opt(n, set.features.cols, cfg.momentum);
    std::vector<std::size_t> order(set.features.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch_size, ++steps) {
            const std::size_t count = std::min(batch_size, order.size() - begin);
            Matrix batch(count, set.features.cols);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch.set_row(i, set.features.row(order[begin + i]));
                labels[i] = set.labels[order[begin + i]];
            }
            ArcfaceLoss loss = arcface_loss(res.head.weights, batch, labels,
                                            cfg.arcface_scale, cfg.arcface_margin);
            require(std::isfinite(loss.value), ErrorCode::divergence,
                    "train_linear: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += loss.value;
            opt.step(res.head.weights, loss.dweights, cfg.lr);
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                .count();
        res.history.push_back({epoch, epoch_loss / static_cast<double>(steps), cfg.lr, wall});
    }
    res.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

// Training-set top-1 under the head (cosine argmax, lowest index on ties).
inline double top1_accuracy(const LinearHead& head, const LabeledFeatures& set) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < set.features.rows; ++r) {
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < head.weights.rows; ++j) {
            const double score = cosine(head.weights.row(j), set.features.row(r));
            if (score > best_score) {
                best_score = score;
                best = static_cast<int>(j);
            }
        }
        hits += best == set.labels[r];
    }
    return static_cast<double>(hits) / static_cast<double>(set.features.rows);
}

} // namespace stylegen
