#include "agcn/losses.hpp"

#include <cmath>

namespace agcn {

void LossConfig::validate() const {
    if (!(std::isfinite(gamma_pos) && gamma_pos >= 0.0))
        throw ConfigError("loss.gamma_pos: must be finite and >= 0");
    if (!(std::isfinite(gamma_neg) && gamma_neg >= 0.0))
        throw ConfigError("loss.gamma_neg: must be finite and >= 0");
    if (!(std::isfinite(margin) && margin >= 0.0 && margin < 1.0))
        throw ConfigError("loss.margin: must lie in [0, 1)");
    if (!(std::isfinite(lambda_d) && lambda_d >= 0.0))
        throw ConfigError("loss.lambda_d: must be finite and >= 0");
}

Var clamped_log(Tape& t, Var x) {
    return t.log(t.add_scalar(t.relu(t.add_scalar(x, -kLogFloor)), kLogFloor));
}

static void require_open_unit(const Matrix& m, const char* what) {
    for (double v : m.data())
        if (!(v > 0.0 && v < 1.0))
            throw ContractError(std::string(what) +
                                ": probabilities must lie strictly inside (0, 1)");
}

static void require_binary(const Matrix& m, const char* what) {
    for (double v : m.data())
        if (v != 0.0 && v != 1.0)
            throw ContractError(std::string(what) + ": targets must be binary (0/1)");
}

Var asl_loss(Tape& t, Var probs, const Matrix& targets, const LossConfig& cfg) {
    cfg.validate();
    const Matrix& p = t.value(probs);
    if (!p.same_shape(targets))
        throw ShapeError("asl_loss: probs " + p.shape_str() + " vs targets " +
                         targets.shape_str());
    require_open_unit(p, "asl_loss");
    require_binary(targets, "asl_loss");

    Matrix not_targets = targets;
    for (double& v : not_targets.data()) v = 1.0 - v;
    Var y = t.constant(targets);
    Var y_not = t.constant(not_targets);

    Var one_minus_p = t.add_scalar(t.scale(probs, -1.0), 1.0);
    Var pos = t.hadamard(y, t.hadamard(t.pow_const(one_minus_p, cfg.gamma_pos),
                                       clamped_log(t, probs)));

    Var pm = t.relu(t.add_scalar(probs, -cfg.margin));  // max(p - m, 0)
    Var one_minus_pm = t.add_scalar(t.scale(pm, -1.0), 1.0);
    Var neg = t.hadamard(y_not, t.hadamard(t.pow_const(pm, cfg.gamma_neg),
                                           clamped_log(t, one_minus_pm)));

    const double n_samples = static_cast<double>(p.rows());
    return t.scale(t.total_sum(t.add(pos, neg)), -1.0 / n_samples);
}

Var domain_loss(Tape& t, Var d_hat, const std::vector<int>& domain) {
    const Matrix& d = t.value(d_hat);
    if (d.cols() != 1 || d.rows() != domain.size())
        throw ShapeError("domain_loss: predictions must be " + std::to_string(domain.size()) +
                         "x1, got " + d.shape_str());
    require_open_unit(d, "domain_loss");

    Matrix dm(domain.size(), 1);
    for (std::size_t i = 0; i < domain.size(); ++i) {
        if (domain[i] != 0 && domain[i] != 1)
            throw ContractError("domain_loss: domain labels must be 0 (source) or 1 (target)");
        dm(i, 0) = static_cast<double>(domain[i]);
    }
    Matrix dm_not = dm;
    for (double& v : dm_not.data()) v = 1.0 - v;

    Var dv = t.constant(dm);
    Var dv_not = t.constant(dm_not);
    Var one_minus_dhat = t.add_scalar(t.scale(d_hat, -1.0), 1.0);
    Var ll = t.add(t.hadamard(dv_not, clamped_log(t, one_minus_dhat)),
                   t.hadamard(dv, clamped_log(t, d_hat)));
    return t.scale(t.total_sum(ll), -1.0 / static_cast<double>(domain.size()));
}

double domain_loss_paper_form(const Matrix& d_hat, const std::vector<int>& domain) {
    if (d_hat.cols() != 1 || d_hat.rows() != domain.size())
        throw ShapeError("domain_loss_paper_form: predictions must be " +
                         std::to_string(domain.size()) + "x1, got " + d_hat.shape_str());
    double source_sum = 0.0, target_sum = 0.0;
    std::size_t n_source = 0, n_target = 0;
    for (std::size_t i = 0; i < domain.size(); ++i) {
        const double v = d_hat(i, 0);
        if (domain[i] == 0) {
            source_sum += std::log(1.0 / std::max(v, kLogFloor));
            ++n_source;
        } else {
            target_sum += std::log(1.0 / std::max(1.0 - v, kLogFloor));
            ++n_target;
        }
    }
    double total = 0.0;
    if (n_source) total += source_sum / static_cast<double>(n_source);
    if (n_target) total += target_sum / static_cast<double>(n_target);
    return total;
}

Var total_objective(Tape& t, Var l_c, Var l_d, const LossConfig& cfg) {
    cfg.validate();
    const Matrix& c = t.value(l_c);
    const Matrix& d = t.value(l_d);
    if (c.rows() != 1 || c.cols() != 1 || d.rows() != 1 || d.cols() != 1)
        throw ContractError("total_objective: both losses must be scalars");
    if (!c.all_finite() || !d.all_finite())
        throw NumericError("total_objective: non-finite loss");
    return t.add(l_c, t.scale(l_d, cfg.lambda_d));
}

}  // namespace agcn
