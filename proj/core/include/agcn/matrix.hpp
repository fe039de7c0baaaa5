#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "agcn/error.hpp"

namespace agcn {

/// Dense row-major matrix of doubles. The one value type every module
/// computes with; 64-bit throughout.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix eye(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Plain (non-differentiable) kernels. The tape routes its forward math
// through these; eval-only code uses them directly.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
Matrix add_scalar(const Matrix& m, double s);
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix concat_rows(const Matrix& a, const Matrix& b);
double total_sum(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Cosine similarity of every row pair; pairs where either row has norm
// below eps yield 0. Shared by the tape primitive and the detached path.
Matrix cosine_similarity_rows(const Matrix& f, double eps);

void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what);

}  // namespace agcn
