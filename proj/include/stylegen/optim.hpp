#pragma once

// SGD with momentum over a parameter matrix, and the cosine learning-rate
// schedule. Momentum follows the v = mu*v + g; p -= lr*v convention, with
// the buffer updated for every row each step (rows outside the current
// batch simply contribute zero gradient).

#include <cmath>
#include <numbers>

#include "stylegen/common.hpp"

namespace stylegen {

// Decays from `base` toward 0 over `total` ticks: 0.5*base*(1+cos(pi*t/total)).
inline double cosine_lr(double base, int tick, int total) {
    require(total > 0, ErrorCode::config, "cosine_lr: total must be positive");
    if (tick >= total) return 0.0;
    return 0.5 * base * (1.0 + std::cos(std::numbers::pi * tick / total));
}

class SgdMomentum {
public:
    SgdMomentum(std::size_t rows, std::size_t cols, double momentum)
        : momentum_(momentum), velocity_(rows, cols) {
        require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config,
                "momentum must lie in [0, 1)");
    }

    // grads shape must equal params shape; rows with zero grad still decay
    // their velocity into the parameters.
    void step(Matrix& params, const Matrix& grads, double lr) {
        require(params.rows == velocity_.rows && params.cols == velocity_.cols &&
                    grads.rows == params.rows && grads.cols == params.cols,
                ErrorCode::dimension, "SgdMomentum::step: shape mismatch");
        for (std::size_t i = 0; i < params.data.size(); ++i) {
            velocity_.data[i] = momentum_ * velocity_.data[i] + grads.data[i];
            params.data[i] -= lr * velocity_.data[i];
        }
    }

    // Single-row variant for one-at-a-time schedules.
    void step_row(Matrix& params, std::size_t row, std::span<const double> grad, double lr) {
        require(grad.size() == params.cols, ErrorCode::dimension,
                "SgdMomentum::step_row: grad size mismatch");
        auto v = velocity_.row(row);
        auto p = params.row(row);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            v[i] = momentum_ * v[i] + grad[i];
            p[i] -= lr * v[i];
        }
    }

    void reset_row(std::size_t row) {
        auto v = velocity_.row(row);
        std::fill(v.begin(), v.end(), 0.0);
    }

private:
    double momentum_;
    Matrix velocity_;
};

} // namespace stylegen
