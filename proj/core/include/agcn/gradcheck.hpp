#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "agcn/matrix.hpp"

namespace agcn {

// Central finite differences of a scalar function, entry by entry:
// (f(p + h e_ij) - f(p - h e_ij)) / 2h. The independent oracle every
// analytic backward is judged against; it only ever calls f forward.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& p, double h);

struct GradCheckOptions {
    int trials = 100;
    double tol_rel = 1e-5;
    double tol_abs = 1e-8;
    double fd_step = 1e-6;
    std::uint64_t seed = 7;
    std::size_t max_dim = 8;
};

struct GradCheckResult {
    std::string primitive;
    double max_rel_err = 0.0;
    int trials = 0;
    bool pass = true;
};

// Entrywise comparison: passes when |a - f| <= tol_abs + tol_rel * max(|a|, |f|)
// everywhere. Reports the largest relative error (with the absolute floor)
// through max_rel_err when non-null.
bool grads_match(const Matrix& analytic, const Matrix& fd, double tol_rel, double tol_abs,
                 double* max_rel_err = nullptr);

// Runs every differentiable primitive through seeded random instances and
// the finite-difference oracle. One result row per primitive.
std::vector<GradCheckResult> check_primitives(const GradCheckOptions& opts);

}  // namespace agcn
