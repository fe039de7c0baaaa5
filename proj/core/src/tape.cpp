#include "agcn/tape.hpp"

#include <cmath>

namespace agcn {

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Hadamard: return "hadamard";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::PowConst: return "pow_const";
        case OpKind::Log: return "log";
        case OpKind::Transpose: return "transpose";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::SliceRows: return "slice_rows";
        case OpKind::RowSum: return "row_sum";
        case OpKind::TotalSum: return "total_sum";
        case OpKind::MeanAll: return "mean_all";
        case OpKind::BroadcastRowAdd: return "broadcast_row_add";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::RowSoftmax: return "row_softmax";
        case OpKind::CosineRowPairs: return "cosine_row_pairs";
        case OpKind::SelfImportance: return "self_importance";
        case OpKind::GradScale: return "grad_scale";
    }
    return "?";
}

const ExprNode& Tape::node(Var v) const {
    if (v.idx >= nodes_.size()) throw ContractError("tape: dangling Var handle");
    return nodes_[v.idx];
}

ExprNode& Tape::node(Var v) {
    if (v.idx >= nodes_.size()) throw ContractError("tape: dangling Var handle");
    return nodes_[v.idx];
}

Var Tape::push(ExprNode&& n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::unary(OpKind op, Var x, Matrix value, double attr0, double attr1) {
    ExprNode n;
    n.op = op;
    n.inputs[0] = x.idx;
    n.n_inputs = 1;
    n.attr0 = attr0;
    n.attr1 = attr1;
    n.value = std::move(value);
    node(x);  // validate handle
    return push(std::move(n));
}

Var Tape::binary(OpKind op, Var a, Var b, Matrix value) {
    ExprNode n;
    n.op = op;
    n.inputs[0] = a.idx;
    n.inputs[1] = b.idx;
    n.n_inputs = 2;
    n.value = std::move(value);
    node(a);
    node(b);
    return push(std::move(n));
}

static void check_input_matrix(const Matrix& m, const char* what) {
    if (m.rows() == 0 || m.cols() == 0)
        throw ContractError(std::string(what) + ": matrix dimensions must be positive");
    if (!m.all_finite())
        throw ContractError(std::string(what) + ": non-finite entries rejected");
}

Var Tape::leaf(const std::string& param_id, const Matrix& value) {
    check_input_matrix(value, "leaf");
    if (param_id.empty()) throw ContractError("leaf: empty parameter id");
    if (leaf_index_.count(param_id))
        throw ContractError("leaf: duplicate parameter id '" + param_id + "'");
    ExprNode n;
    n.op = OpKind::Leaf;
    n.value = value;
    n.param_id = param_id;
    Var v = push(std::move(n));
    leaf_index_[param_id] = v.idx;
    return v;
}

Var Tape::constant(const Matrix& value) {
    check_input_matrix(value, "constant");
    ExprNode n;
    n.op = OpKind::Constant;
    n.value = value;
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    return binary(OpKind::MatMul, a, b, agcn::matmul(value(a), value(b)));
}

Var Tape::add(Var a, Var b) { return binary(OpKind::Add, a, b, agcn::add(value(a), value(b))); }

Var Tape::sub(Var a, Var b) { return binary(OpKind::Sub, a, b, agcn::sub(value(a), value(b))); }

Var Tape::hadamard(Var a, Var b) {
    return binary(OpKind::Hadamard, a, b, agcn::hadamard(value(a), value(b)));
}

Var Tape::scale(Var x, double s) {
    if (!std::isfinite(s)) throw ContractError("scale: non-finite factor");
    return unary(OpKind::Scale, x, agcn::scale(value(x), s), s);
}

Var Tape::add_scalar(Var x, double s) {
    if (!std::isfinite(s)) throw ContractError("add_scalar: non-finite addend");
    return unary(OpKind::AddScalar, x, agcn::add_scalar(value(x), s), s);
}

Var Tape::pow_const(Var x, double p) {
    if (!std::isfinite(p)) throw ContractError("pow_const: non-finite exponent");
    Matrix out = value(x);
    for (double& v : out.data()) v = std::pow(v, p);
    if (!out.all_finite()) throw NumericError("pow_const: non-finite result");
    return unary(OpKind::PowConst, x, std::move(out), p);
}

Var Tape::log(Var x) {
    Matrix out = value(x);
    for (double& v : out.data()) {
        if (v <= 0.0) throw NumericError("log: argument not strictly positive");
        v = std::log(v);
    }
    return unary(OpKind::Log, x, std::move(out));
}

Var Tape::transpose(Var x) { return unary(OpKind::Transpose, x, agcn::transpose(value(x))); }

Var Tape::concat_cols(Var a, Var b) {
    return binary(OpKind::ConcatCols, a, b, agcn::concat_cols(value(a), value(b)));
}

Var Tape::concat_rows(Var a, Var b) {
    return binary(OpKind::ConcatRows, a, b, agcn::concat_rows(value(a), value(b)));
}

Var Tape::slice_rows(Var x, std::size_t r0, std::size_t r1) {
    const Matrix& in = value(x);
    if (r0 >= r1 || r1 > in.rows())
        throw ShapeError("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") out of range for " + in.shape_str());
    Matrix out(r1 - r0, in.cols());
    for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = 0; j < in.cols(); ++j) out(i - r0, j) = in(i, j);
    return unary(OpKind::SliceRows, x, std::move(out), static_cast<double>(r0),
                 static_cast<double>(r1));
}

Var Tape::row_sum(Var x) {
    const Matrix& in = value(x);
    Matrix out(in.rows(), 1);
    for (std::size_t i = 0; i < in.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < in.cols(); ++j) s += in(i, j);
        out(i, 0) = s;
    }
    return unary(OpKind::RowSum, x, std::move(out));
}

Var Tape::total_sum(Var x) {
    Matrix out(1, 1, agcn::total_sum(value(x)));
    return unary(OpKind::TotalSum, x, std::move(out));
}

Var Tape::mean_all(Var x) {
    Matrix out(1, 1, agcn::total_sum(value(x)) / static_cast<double>(value(x).size()));
    return unary(OpKind::MeanAll, x, std::move(out));
}

Var Tape::broadcast_row_add(Var x, Var row) {
    const Matrix& in = value(x);
    const Matrix& v = value(row);
    if (v.rows() != 1 || v.cols() != in.cols())
        throw ShapeError("broadcast_row_add: need 1x" + std::to_string(in.cols()) + " row, got " +
                         v.shape_str());
    Matrix out = in;
    for (std::size_t i = 0; i < in.rows(); ++i)
        for (std::size_t j = 0; j < in.cols(); ++j) out(i, j) += v(0, j);
    return binary(OpKind::BroadcastRowAdd, x, row, std::move(out));
}

Var Tape::leaky_relu(Var x, double slope) {
    if (!(std::isfinite(slope) && slope > 0.0 && slope < 1.0))
        throw ConfigError("leaky_relu: slope must lie in (0, 1)");
    Matrix out = value(x);
    for (double& v : out.data())
        if (v < 0.0) v *= slope;
    return unary(OpKind::LeakyRelu, x, std::move(out), slope);
}

Var Tape::relu(Var x) {
    Matrix out = value(x);
    for (double& v : out.data())
        if (v < 0.0) v = 0.0;
    return unary(OpKind::Relu, x, std::move(out));
}

Var Tape::sigmoid(Var x) {
    Matrix out = value(x);
    // Branch split keeps exp() arguments nonpositive, so saturation cannot
    // overflow.
    for (double& v : out.data()) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return unary(OpKind::Sigmoid, x, std::move(out));
}

Var Tape::row_softmax(Var x) {
    const Matrix& in = value(x);
    Matrix out(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
        double mx = in(i, 0);
        for (std::size_t j = 1; j < in.cols(); ++j) mx = std::max(mx, in(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < in.cols(); ++j) {
            out(i, j) = std::exp(in(i, j) - mx);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < in.cols(); ++j) out(i, j) /= denom;
    }
    return unary(OpKind::RowSoftmax, x, std::move(out));
}

Var Tape::cosine_row_pairs(Var f) {
    return unary(OpKind::CosineRowPairs, f,
                 cosine_similarity_rows(value(f), kCosineNormEps));
}

Var Tape::self_importance(Var alpha) {
    const Matrix& a = value(alpha);
    if (a.rows() != a.cols())
        throw ShapeError("self_importance: square matrix required, got " + a.shape_str());
    Matrix out = a;
    std::vector<std::size_t> argmax(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::size_t k = 0;
        for (std::size_t j = 1; j < a.cols(); ++j)
            if (a(i, j) > a(i, k)) k = j;  // first index wins ties
        argmax[i] = k;
        out(i, i) += a(i, k);
    }
    Var v = unary(OpKind::SelfImportance, alpha, std::move(out));
    node(v).aux = std::move(argmax);
    return v;
}

Var Tape::grad_scale(Var x, double s) {
    if (!std::isfinite(s)) throw ContractError("grad_scale: non-finite factor");
    return unary(OpKind::GradScale, x, value(x), s);
}

GradMap Tape::backward(Var root) {
    const ExprNode& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1)
        throw ContractError("backward: root must be 1x1, got " + r.value.shape_str());
    if (backward_done_)
        throw StateError("backward: gradients already computed, call reset_grads() first");
    backward_done_ = true;

    for (ExprNode& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
    nodes_[root.idx].grad(0, 0) = 1.0;

    for (std::size_t pos = root.idx + 1; pos-- > 0;) {
        ExprNode& n = nodes_[pos];
        if (n.n_inputs == 0) continue;
        const Matrix& g = n.grad;
        ExprNode& a = nodes_[n.inputs[0]];
        switch (n.op) {
            case OpKind::MatMul: {
                ExprNode& b = nodes_[n.inputs[1]];
                a.grad = agcn::add(a.grad, agcn::matmul(g, agcn::transpose(b.value)));
                b.grad = agcn::add(b.grad, agcn::matmul(agcn::transpose(a.value), g));
                break;
            }
            case OpKind::Add: {
                ExprNode& b = nodes_[n.inputs[1]];
                a.grad = agcn::add(a.grad, g);
                b.grad = agcn::add(b.grad, g);
                break;
            }
            case OpKind::Sub: {
                ExprNode& b = nodes_[n.inputs[1]];
                a.grad = agcn::add(a.grad, g);
                b.grad = agcn::sub(b.grad, g);
                break;
            }
            case OpKind::Hadamard: {
                ExprNode& b = nodes_[n.inputs[1]];
                a.grad = agcn::add(a.grad, agcn::hadamard(g, b.value));
                b.grad = agcn::add(b.grad, agcn::hadamard(g, a.value));
                break;
            }
            case OpKind::Scale:
                // factor 0 contributes nothing, keeping lambda = 0 runs
                // bitwise identical to runs without the scaled branch
                if (n.attr0 != 0.0) a.grad = agcn::add(a.grad, agcn::scale(g, n.attr0));
                break;
            case OpKind::AddScalar:
                a.grad = agcn::add(a.grad, g);
                break;
            case OpKind::PowConst: {
                const double p = n.attr0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = a.value.data()[i];
                    double d;
                    if (p == 0.0) {
                        d = 0.0;
                    } else if (x == 0.0) {
                        // subgradient 0 at the kink for fractional exponents
                        d = (p == 1.0) ? 1.0 : 0.0;
                    } else {
                        d = p * std::pow(x, p - 1.0);
                    }
                    a.grad.data()[i] += g.data()[i] * d;
                }
                break;
            }
            case OpKind::Log:
                for (std::size_t i = 0; i < g.size(); ++i)
                    a.grad.data()[i] += g.data()[i] / a.value.data()[i];
                break;
            case OpKind::Transpose:
                a.grad = agcn::add(a.grad, agcn::transpose(g));
                break;
            case OpKind::ConcatCols: {
                ExprNode& b = nodes_[n.inputs[1]];
                const std::size_t ca = a.value.cols();
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < ca; ++j) a.grad(i, j) += g(i, j);
                    for (std::size_t j = 0; j < b.value.cols(); ++j)
                        b.grad(i, j) += g(i, ca + j);
                }
                break;
            }
            case OpKind::ConcatRows: {
                ExprNode& b = nodes_[n.inputs[1]];
                const std::size_t ra = a.value.rows();
                for (std::size_t i = 0; i < ra; ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) a.grad(i, j) += g(i, j);
                for (std::size_t i = 0; i < b.value.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) b.grad(i, j) += g(ra + i, j);
                break;
            }
            case OpKind::SliceRows: {
                const std::size_t r0 = static_cast<std::size_t>(n.attr0);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) a.grad(r0 + i, j) += g(i, j);
                break;
            }
            case OpKind::RowSum:
                for (std::size_t i = 0; i < a.value.rows(); ++i)
                    for (std::size_t j = 0; j < a.value.cols(); ++j) a.grad(i, j) += g(i, 0);
                break;
            case OpKind::TotalSum:
                a.grad = agcn::add(a.grad, Matrix(a.value.rows(), a.value.cols(), g(0, 0)));
                break;
            case OpKind::MeanAll:
                a.grad = agcn::add(
                    a.grad, Matrix(a.value.rows(), a.value.cols(),
                                   g(0, 0) / static_cast<double>(a.value.size())));
                break;
            case OpKind::BroadcastRowAdd: {
                ExprNode& b = nodes_[n.inputs[1]];
                a.grad = agcn::add(a.grad, g);
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.rows(); ++i) s += g(i, j);
                    b.grad(0, j) += s;
                }
                break;
            }
            case OpKind::LeakyRelu:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = a.value.data()[i];
                    a.grad.data()[i] += g.data()[i] * (x < 0.0 ? n.attr0 : 1.0);
                }
                break;
            case OpKind::Relu:
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a.value.data()[i] > 0.0) a.grad.data()[i] += g.data()[i];
                break;
            case OpKind::Sigmoid:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value.data()[i];
                    a.grad.data()[i] += g.data()[i] * s * (1.0 - s);
                }
                break;
            case OpKind::RowSoftmax:
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * n.value(i, j);
                    for (std::size_t j = 0; j < g.cols(); ++j)
                        a.grad(i, j) += n.value(i, j) * (g(i, j) - dot);
                }
                break;
            case OpKind::CosineRowPairs: {
                const Matrix& f = a.value;
                const std::size_t nn = f.rows(), d = f.cols();
                std::vector<double> norms(nn, 0.0);
                for (std::size_t i = 0; i < nn; ++i) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < d; ++k) s += f(i, k) * f(i, k);
                    norms[i] = std::sqrt(s);
                }
                for (std::size_t i = 0; i < nn; ++i) {
                    for (std::size_t j = 0; j < nn; ++j) {
                        const double gij = g(i, j);
                        if (gij == 0.0) continue;
                        if (norms[i] < kCosineNormEps || norms[j] < kCosineNormEps) continue;
                        const double c = n.value(i, j);
                        const double inv = 1.0 / (norms[i] * norms[j]);
                        for (std::size_t k = 0; k < d; ++k) {
                            a.grad(i, k) +=
                                gij * (f(j, k) * inv - c * f(i, k) / (norms[i] * norms[i]));
                            a.grad(j, k) +=
                                gij * (f(i, k) * inv - c * f(j, k) / (norms[j] * norms[j]));
                        }
                    }
                }
                break;
            }
            case OpKind::SelfImportance: {
                a.grad = agcn::add(a.grad, g);
                // row max routes the diagonal's extra gradient to the argmax
                for (std::size_t i = 0; i < g.rows(); ++i) a.grad(i, n.aux[i]) += g(i, i);
                break;
            }
            case OpKind::GradScale:
                if (n.attr0 != 0.0) a.grad = agcn::add(a.grad, agcn::scale(g, n.attr0));
                break;
            case OpKind::Leaf:
            case OpKind::Constant:
                break;
        }
    }

    GradMap grads;
    for (const auto& [id, idx] : leaf_index_) grads[id] = nodes_[idx].grad;
    return grads;
}

void Tape::reset_grads() {
    for (ExprNode& n : nodes_) n.grad = Matrix();
    backward_done_ = false;
}

}  // namespace agcn
