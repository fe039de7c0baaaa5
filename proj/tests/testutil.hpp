#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "agcn/matrix.hpp"

namespace agcn::test {

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

// Scalar-loop re-implementations, deliberately independent of the tape path.

inline double naive_leaky(double x, double slope) { return x >= 0.0 ? x : slope * x; }

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

// e_ij = LeakyReLU(a^T [W f_i || W f_j]), one pair at a time with an
// explicit concatenation.
inline Matrix naive_attention_scores(const Matrix& f, const Matrix& w, const Matrix& a,
                                     double slope) {
    const std::size_t n = f.rows(), d_out = w.cols();
    Matrix e(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> cat(2 * d_out, 0.0);
            for (std::size_t c = 0; c < d_out; ++c)
                for (std::size_t k = 0; k < f.cols(); ++k) {
                    cat[c] += f(i, k) * w(k, c);
                    cat[d_out + c] += f(j, k) * w(k, c);
                }
            double score = 0.0;
            for (std::size_t c = 0; c < 2 * d_out; ++c) score += a(c, 0) * cat[c];
            e(i, j) = naive_leaky(score, slope);
        }
    }
    return e;
}

inline Matrix naive_row_softmax(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) denom += std::exp(x(i, j) - mx);
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x(i, j) - mx) / denom;
    }
    return out;
}

inline Matrix naive_self_importance(const Matrix& alpha) {
    Matrix b = alpha;
    for (std::size_t i = 0; i < alpha.rows(); ++i) {
        double mx = alpha(i, 0);
        for (std::size_t j = 1; j < alpha.cols(); ++j) mx = std::max(mx, alpha(i, j));
        b(i, i) += mx;
    }
    return b;
}

inline Matrix naive_cosine_pairs(const Matrix& f, double eps) {
    const std::size_t n = f.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double ni = 0.0, nj = 0.0, dot = 0.0;
            for (std::size_t k = 0; k < f.cols(); ++k) {
                ni += f(i, k) * f(i, k);
                nj += f(j, k) * f(j, k);
                dot += f(i, k) * f(j, k);
            }
            ni = std::sqrt(ni);
            nj = std::sqrt(nj);
            if (ni < eps || nj < eps) continue;
            out(i, j) = dot / (ni * nj);
        }
    return out;
}

inline Matrix naive_agcn_layer(const Matrix& fixed_adj, const Matrix& f, const Matrix& w,
                               const Matrix& attn, double slope, bool use_b, bool use_c,
                               double cosine_eps) {
    Matrix s = fixed_adj;
    if (use_b)
        s = add(s, naive_self_importance(
                       naive_row_softmax(naive_attention_scores(f, w, attn, slope))));
    if (use_c) s = add(s, naive_cosine_pairs(f, cosine_eps));
    Matrix out = naive_matmul(naive_matmul(s, f), w);
    for (double& v : out.data()) v = naive_leaky(v, slope);
    return out;
}

inline Matrix naive_mlp(const Matrix& x, const std::vector<Matrix>& weights,
                        const std::vector<Matrix>& biases, double slope) {
    Matrix h = x;
    for (std::size_t layer = 0; layer < weights.size(); ++layer) {
        Matrix z = naive_matmul(h, weights[layer]);
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += biases[layer](0, j);
        if (layer + 1 < weights.size())
            for (double& v : z.data()) v = naive_leaky(v, slope);
        h = std::move(z);
    }
    return h;
}

}  // namespace agcn::test
