#pragma once

#include <cstddef>

#include "agcn/matrix.hpp"

namespace agcn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter first/second moment state; t counts completed steps.
struct AdamState {
    Matrix m;
    Matrix v;
    long t = 0;
};

// Bias-corrected Adam update in place. Lazily sizes the state on first use.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// max_lr * 0.5 * (1 + cos(pi t / T)); t must lie in [0, T].
double cosine_lr(std::size_t t, std::size_t total_steps, double max_lr);

}  // namespace agcn
