#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "agcn/matrix.hpp"

namespace agcn {

// The closed primitive set. Every op has an exact forward formula and an
// analytic backward, and each is covered by the finite-difference suite.
enum class OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Hadamard,
    Scale,            // x * s
    AddScalar,        // x + s
    PowConst,         // x ^ p, elementwise
    Log,              // ln(x), x > 0
    Transpose,
    ConcatCols,       // [a || b]
    ConcatRows,       // [a ; b]
    SliceRows,        // rows [r0, r1) of x
    RowSum,           // r x c -> r x 1
    TotalSum,         // r x c -> 1 x 1
    MeanAll,          // r x c -> 1 x 1
    BroadcastRowAdd,  // x[r x c] + v[1 x c]
    LeakyRelu,
    Relu,
    Sigmoid,
    RowSoftmax,
    CosineRowPairs,   // N x d -> N x N cosine similarity of row pairs
    SelfImportance,   // alpha -> alpha + diag(row max)
    GradScale,        // identity forward, gradient scaled by s (GRL with s = -lambda)
};

const char* op_name(OpKind op);

// Handle into a Tape. Plain index, cheap to copy; all operations go
// through the owning tape.
struct Var {
    std::size_t idx = static_cast<std::size_t>(-1);
};

struct ExprNode {
    OpKind op = OpKind::Constant;
    std::array<std::size_t, 2> inputs{};  // predecessor node indices
    std::size_t n_inputs = 0;
    double attr0 = 0.0;  // scalar / slope / exponent / slice start
    double attr1 = 0.0;  // slice end
    Matrix value;
    Matrix grad;                   // same shape as value, filled by backward()
    std::vector<std::size_t> aux;  // per-row argmax for SelfImportance
    std::string param_id;          // leaves only
};

using GradMap = std::map<std::string, Matrix>;

// Tolerance for the zero-row guard in CosineRowPairs: rows with L2 norm
// below this produce all-zero similarity entries.
inline constexpr double kCosineNormEps = 1e-12;

// Define-by-run expression tape. Nodes are appended in topological order;
// backward() runs the reverse sweep exactly once and hands back the
// gradients of all named leaves. Single-writer: never share one tape
// mutably across threads (independent tapes are fine in parallel).
class Tape {
public:
    Var leaf(const std::string& param_id, const Matrix& value);
    Var constant(const Matrix& value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var x, double s);
    Var add_scalar(Var x, double s);
    Var pow_const(Var x, double p);
    Var log(Var x);
    Var transpose(Var x);
    Var concat_cols(Var a, Var b);
    Var concat_rows(Var a, Var b);
    Var slice_rows(Var x, std::size_t r0, std::size_t r1);
    Var row_sum(Var x);
    Var total_sum(Var x);
    Var mean_all(Var x);
    Var broadcast_row_add(Var x, Var row);
    Var leaky_relu(Var x, double slope);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var row_softmax(Var x);
    Var cosine_row_pairs(Var f);
    Var self_importance(Var alpha);
    Var grad_scale(Var x, double s);

    const Matrix& value(Var v) const { return node(v).value; }
    const Matrix& grad(Var v) const { return node(v).grad; }
    std::size_t rows(Var v) const { return node(v).value.rows(); }
    std::size_t cols(Var v) const { return node(v).value.cols(); }
    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from a 1x1 root. Every leaf's gradient is accumulated
    // (a node feeding several consumers receives every contribution).
    // Calling again without reset_grads() is a StateError.
    GradMap backward(Var root);
    void reset_grads();

private:
    const ExprNode& node(Var v) const;
    ExprNode& node(Var v);
    Var push(ExprNode&& n);
    Var unary(OpKind op, Var x, Matrix value, double attr0 = 0.0, double attr1 = 0.0);
    Var binary(OpKind op, Var a, Var b, Matrix value);

    // deque: appends never relocate nodes, so value()/grad() references
    // stay valid while the graph keeps growing
    std::deque<ExprNode> nodes_;
    std::map<std::string, std::size_t> leaf_index_;
    bool backward_done_ = false;
};

}  // namespace agcn
