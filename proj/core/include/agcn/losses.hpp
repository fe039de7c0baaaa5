#pragma once

#include <vector>

#include "agcn/matrix.hpp"
#include "agcn/tape.hpp"

namespace agcn {

// Hyperparameters of the asymmetric loss and the domain-weighting term.
struct LossConfig {
    double gamma_pos = 0.0;  // focusing exponent, positive samples
    double gamma_neg = 4.0;  // focusing exponent, negative samples
    double margin = 0.05;    // probability shift m for easy negatives
    double lambda_d = 1.0;   // weight of the domain loss in the objective

    void validate() const;
};

// Floor applied to every log argument inside the losses.
inline constexpr double kLogFloor = 1e-12;

// ln(max(x, kLogFloor)), differentiable above the floor.
Var clamped_log(Tape& t, Var x);

// Asymmetric multi-label loss: negated mean over samples of
//   sum_i [ y_i (1-p_i)^g+ log p_i + (1-y_i) pm_i^g- log(1-pm_i) ],
// pm = max(p - m, 0). Lower is better; zero only for perfect predictions.
// Probabilities must lie strictly inside (0, 1).
Var asl_loss(Tape& t, Var probs, const Matrix& targets, const LossConfig& cfg);

// Mean binary cross-entropy of the domain predictions against domain labels
// (0 = source, 1 = target). The discriminator descends this toward correct
// prediction; the GRL in front of it hands the generator the reversed
// gradient, which together realize the adversarial min-max.
Var domain_loss(Tape& t, Var d_hat, const std::vector<int>& domain);

// The saturating form of the domain loss,
// E_s log(1/d_hat) + E_t log(1/(1-d_hat)): grows as the discriminator gets
// the domains right. Reported-only diagnostic; the trained objective uses
// domain_loss above.
double domain_loss_paper_form(const Matrix& d_hat, const std::vector<int>& domain);

// l_c + lambda * l_d.
Var total_objective(Tape& t, Var l_c, Var l_d, const LossConfig& cfg);

}  // namespace agcn
