#include "agcn/optim.hpp"

#include <cmath>
#include <numbers>

namespace agcn {

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, double lr,
               const AdamConfig& cfg) {
    require_same_shape(param, grad, "adam_step");
    if (!(lr > 0.0 && std::isfinite(lr))) throw ContractError("adam_step: lr must be positive");
    if (state.t == 0) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    } else {
        require_same_shape(param, state.m, "adam_step state");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        double& m = state.m.data()[i];
        double& v = state.v.data()[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

double cosine_lr(std::size_t t, std::size_t total_steps, double max_lr) {
    if (total_steps == 0) throw ContractError("cosine_lr: total_steps must be positive");
    if (t > total_steps)
        throw ContractError("cosine_lr: step " + std::to_string(t) + " past total " +
                            std::to_string(total_steps));
    const double frac = static_cast<double>(t) / static_cast<double>(total_steps);
    return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace agcn
