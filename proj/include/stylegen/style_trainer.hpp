#pragma once

// Stage-1 optimization of the K pseudo-style embeddings.
//
// Three schedules share one config and return the same result shape:
//   batstyler           - per epoch, shuffle the K styles and walk batches
//                         of batch_size, minimizing template cross-entropy
//                         plus the coarse consistency loss for the batch's
//                         styles (the batches partition the styles, so one
//                         epoch covers every (style, coarse name) term).
//   baseline-parallel   - same batch walk, but minimizing the prompt loss
//                         L_style + lambda*L_content with the full
//                         fine-grained category list; diversity terms pair
//                         the batch against all K current style features
//                         (out-of-batch features come from a cache that is
//                         refreshed whenever a style is updated).
//   baseline-sequential - the one-by-one schedule: style i runs its own
//                         mini-optimization against the frozen styles
//                         1..i-1, with (epochs*K/batch)/K steps per style
//                         so total step counts match the parallel runs.
//
// The encoder is frozen; a parameter checksum taken before and after
// training enforces that.

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "stylegen/common.hpp"
#include "stylegen/encoder.hpp"
#include "stylegen/etf.hpp"
#include "stylegen/losses.hpp"
#include "stylegen/optim.hpp"

namespace stylegen {

enum class TrainMode { batstyler, baseline_parallel, baseline_sequential };

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "batstyler") return TrainMode::batstyler;
    if (s == "baseline-parallel") return TrainMode::baseline_parallel;
    if (s == "baseline-sequential") return TrainMode::baseline_sequential;
    fail(ErrorCode::config,
         "unknown training mode \"" + s +
             "\" (expected batstyler | baseline-parallel | baseline-sequential)");
}

inline const char* to_string(TrainMode m) {
    switch (m) {
    case TrainMode::batstyler: return "batstyler";
    case TrainMode::baseline_parallel: return "baseline-parallel";
    default: return "baseline-sequential";
    }
}

struct StyleTrainConfig {
    int style_count = 80; // K
    int epochs = 300;
    double lr = 0.2;
    double momentum = 0.9;
    int batch_size = 4; // must divide K
    double logit_scale = 1.0;
    double lambda = 1.0;         // baseline modes only
    double theta_init_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const {
        require(style_count >= 2, ErrorCode::config, "style training: needs K >= 2");
        require(epochs >= 1, ErrorCode::config, "style training: epochs must be positive");
        require(lr >= 0.0, ErrorCode::config, "style training: negative learning rate");
        require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config,
                "style training: momentum must lie in [0, 1)");
        require(batch_size >= 1 && style_count % batch_size == 0, ErrorCode::config,
                "style training: K must be divisible by batch size");
        require(logit_scale > 0.0, ErrorCode::config, "style training: logit scale must be > 0");
        require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::config,
                "style training: lambda must lie in [0, 1]");
        require(theta_init_std > 0.0, ErrorCode::config,
                "style training: theta init std must be > 0");
    }

    int steps_per_style_sequential() const {
        // (epochs * K / batch) / K; the one-by-one budget that matches the
        // parallel run's total step count.
        const int total_parallel_steps = epochs * (style_count / batch_size);
        const int steps = total_parallel_steps / style_count;
        require(steps >= 1, ErrorCode::config,
                "style training: sequential step budget rounds to zero "
                "(raise epochs or batch size)");
        return steps;
    }
};

// One record per epoch (batstyler / baseline-parallel) or per style
// (baseline-sequential, `epoch` then holds the style index). CE is a mean
// per step; the remaining losses are sums over the epoch's terms.
struct StyleEpochRecord {
    int epoch = 0;
    double loss_ce = 0.0;
    double loss_sc = 0.0;
    double loss_style = 0.0;
    double loss_content = 0.0;
    double total = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
};

struct StyleTrainResult {
    Matrix theta; // K x D
    std::vector<StyleEpochRecord> history;
    double wall_s = 0.0;
    TrainMode mode = TrainMode::batstyler;
};

namespace detail {

inline Matrix init_theta(const StyleTrainConfig& cfg, int token_dim) {
    SeededRng rng(mix64(cfg.seed ^ fnv1a64("theta-init")));
    Matrix theta(static_cast<std::size_t>(cfg.style_count),
                 static_cast<std::size_t>(token_dim));
    for (double& v : theta.data) v = cfg.theta_init_std * rng.gaussian();
    return theta;
}

inline Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.set_row(i, m.row(static_cast<std::size_t>(rows[i])));
    return out;
}

inline void scatter_add_rows(Matrix& dst, const Matrix& src, std::span<const int> rows) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        axpy(1.0, src.row(i), dst.row(static_cast<std::size_t>(rows[i])));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

inline StyleTrainResult train_styles(TrainMode mode, const StyleTrainConfig& cfg,
                                     const EncoderBackend& enc,
                                     const EtfTemplate* etf,
                                     const std::vector<std::string>* css,
                                     const std::vector<std::string>* categories) {
    cfg.validate();
    const auto k = static_cast<std::size_t>(cfg.style_count);
    const auto d = static_cast<std::size_t>(enc.spec().token_dim);

    if (mode == TrainMode::batstyler) {
        require(etf != nullptr, ErrorCode::missing_input,
                "batstyler mode needs the fixed template classifier");
        require(etf->k == cfg.style_count, ErrorCode::dimension,
                "template count must equal K");
        require(etf->p == enc.spec().joint_dim, ErrorCode::dimension,
                "template dim must equal the joint dim");
        require(css != nullptr && !css->empty(), ErrorCode::missing_input,
                "batstyler mode needs a non-empty coarse semantic set");
    } else {
        require(categories != nullptr && !categories->empty(), ErrorCode::missing_input,
                "baseline modes need the fine-grained category list");
    }

    const std::uint64_t checksum_before = enc.parameter_checksum();
    const auto run_start = std::chrono::steady_clock::now();

    StyleTrainResult res;
    res.mode = mode;
    res.theta = detail::init_theta(cfg, enc.spec().token_dim);

    ContentFeatureCache content(enc);
    SgdMomentum opt(k, d, cfg.momentum);
    SeededRng shuffle_rng(mix64(cfg.seed ^ fnv1a64("batch-order")));

    auto guard_finite = [&](double v, int where) {
        if (!std::isfinite(v))
            fail(ErrorCode::divergence,
                 std::string("style training diverged (non-finite loss) at ") +
                     (mode == TrainMode::baseline_sequential ? "style " : "epoch ") +
                     std::to_string(where));
    };

    if (mode == TrainMode::baseline_sequential) {
        const int steps = cfg.steps_per_style_sequential();
        Matrix frozen(0, static_cast<std::size_t>(enc.spec().joint_dim));
        for (int i = 0; i < cfg.style_count; ++i) {
            const auto style_start = std::chrono::steady_clock::now();
            opt.reset_row(static_cast<std::size_t>(i));
            StyleEpochRecord rec;
            rec.epoch = i;
            const int index[1] = {i};
            for (int step = 0; step < steps; ++step) {
                const double lr = cosine_lr(cfg.lr, step, steps);
                Matrix row = detail::gather_rows(res.theta, index);
                double style_part = 0.0, content_part = 0.0;
                ThetaLoss loss = baseline_prompt_loss(row, index, frozen, *categories,
                                                      cfg.lambda, enc, content,
                                                      &style_part, &content_part);
                guard_finite(loss.value, i);
                rec.loss_style += style_part;
                rec.loss_content += content_part;
                rec.total += loss.value;
                rec.lr = lr;
                opt.step_row(res.theta, static_cast<std::size_t>(i), loss.dtheta.row(0), lr);
            }
            // Freeze this style's feature for every later style's pairs.
            Matrix next(frozen.rows + 1, frozen.cols);
            std::copy(frozen.data.begin(), frozen.data.end(), next.data.begin());
            next.set_row(frozen.rows,
                         enc.encode_text(assemble_prompt(PromptKind::style, i),
                                         res.theta.row(static_cast<std::size_t>(i)))
                             .v);
            frozen = std::move(next);
            rec.wall_s = detail::seconds_since(style_start);
            res.history.push_back(rec);
        }
    } else {
        std::vector<int> order(k);
        for (std::size_t i = 0; i < k; ++i) order[i] = static_cast<int>(i);

        // baseline-parallel: features of all K styles at their current
        // theta, refreshed per batch after the update.
        Matrix feature_cache;
        if (mode == TrainMode::baseline_parallel)
            feature_cache = encode_style_features(res.theta, order, enc);

        const auto batch = static_cast<std::size_t>(cfg.batch_size);
        Matrix grads(k, d);
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const auto epoch_start = std::chrono::steady_clock::now();
            const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
            shuffle_rng.shuffle(order);

            StyleEpochRecord rec;
            rec.epoch = epoch;
            rec.lr = lr;
            std::size_t step_count = 0;
            for (std::size_t begin = 0; begin < k; begin += batch, ++step_count) {
                const std::span<const int> indices(order.data() + begin, batch);
                Matrix theta_batch = detail::gather_rows(res.theta, indices);
                grads.zero();

                double step_total = 0.0;
                if (mode == TrainMode::batstyler) {
                    ThetaLoss ce = etf_ce_loss(theta_batch, indices, *etf, cfg.logit_scale, enc);
                    ThetaLoss sc = semantic_consistency_loss(theta_batch, indices, *css, enc,
                                                             content);
                    rec.loss_ce += ce.value;
                    rec.loss_sc += sc.value;
                    step_total = ce.value + sc.value;
                    detail::scatter_add_rows(grads, ce.dtheta, indices);
                    detail::scatter_add_rows(grads, sc.dtheta, indices);
                } else {
                    double style_part = 0.0, content_part = 0.0;
                    ThetaLoss loss = baseline_prompt_loss(theta_batch, indices, feature_cache,
                                                          *categories, cfg.lambda, enc, content,
                                                          &style_part, &content_part);
                    rec.loss_style += style_part;
                    rec.loss_content += content_part;
                    step_total = loss.value;
                    detail::scatter_add_rows(grads, loss.dtheta, indices);
                }
                guard_finite(step_total, epoch);
                rec.total += step_total;
                opt.step(res.theta, grads, lr);

                if (mode == TrainMode::baseline_parallel) {
                    for (int g : indices)
                        feature_cache.set_row(
                            static_cast<std::size_t>(g),
                            enc.encode_text(assemble_prompt(PromptKind::style, g),
                                            res.theta.row(static_cast<std::size_t>(g)))
                                .v);
                }
            }
            rec.loss_ce /= static_cast<double>(step_count); // mean per step
            rec.total /= static_cast<double>(step_count);
            rec.wall_s = detail::seconds_since(epoch_start);
            res.history.push_back(rec);
        }
    }

    res.wall_s = detail::seconds_since(run_start);
    require(enc.parameter_checksum() == checksum_before, ErrorCode::internal,
            "encoder parameters changed during style training");
    require(res.theta.all_finite(), ErrorCode::divergence,
            "style training produced non-finite embeddings");
    return res;
}

inline void write_style_history_csv(const std::string& path, const StyleTrainResult& res) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::io, "cannot write history: " + path);
    out << "epoch,l_ce,l_sc,l_style,l_content,total,lr,wall_s\n";
    out.precision(17);
    for (const auto& r : res.history)
        out << r.epoch << ',' << r.loss_ce << ',' << r.loss_sc << ',' << r.loss_style << ','
            << r.loss_content << ',' << r.total << ',' << r.lr << ',' << r.wall_s << '\n';
}

} // namespace stylegen
