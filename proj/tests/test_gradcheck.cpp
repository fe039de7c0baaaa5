#include "agcn/gradcheck.hpp"
#include "doctest.h"

using namespace agcn;

// The full primitive sweep at the spec'd tolerances. Every op in the closed
// set must appear and pass.
TEST_CASE("every primitive passes 100 seeded finite-difference trials") {
    GradCheckOptions opts;  // trials=100, tol_rel=1e-5, tol_abs=1e-8, dims <= 8
    auto results = check_primitives(opts);

    const char* expected[] = {
        "matmul",     "add",        "sub",         "hadamard",   "scale",
        "add_scalar", "pow_const",  "log",         "transpose",  "concat_cols",
        "concat_rows", "slice_rows", "row_sum",     "total_sum",  "mean_all",
        "broadcast_row_add", "leaky_relu", "relu", "sigmoid",    "row_softmax",
        "cosine_row_pairs", "self_importance", "grad_scale"};
    for (const char* name : expected) {
        bool found = false;
        for (const auto& r : results)
            if (r.primitive == name) {
                found = true;
                INFO(name, " max_rel_err=", r.max_rel_err);
                CHECK(r.pass);
                CHECK(r.trials == 100);
            }
        CHECK_MESSAGE(found, name);
    }
}

TEST_CASE("gradcheck is deterministic for a fixed seed") {
    GradCheckOptions opts;
    opts.trials = 5;
    auto a = check_primitives(opts);
    auto b = check_primitives(opts);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].max_rel_err == b[i].max_rel_err);
}
