#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cct/errors.hpp"

namespace cct {

using Vector = std::vector<double>;

// Throws NonFiniteValue if any entry is NaN/Inf. `what` names the offender.
void check_finite(std::span<const double> values, const char* what);

// Row-major dense matrix of f64. The (rows, cols, data) constructor is the
// domain boundary: it validates size consistency and entry finiteness.
// Internal computations build via Matrix(rows, cols) and fill in place.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

// v / ||v||; ZeroNormError on (near-)zero input.
Vector l2_normalize(const Vector& v);

// Normalizes every row in place; ZeroNormError names the offending row.
void l2_normalize_rows(Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);             // A(n×k) · B(k×m)
Matrix matmul_nt(const Matrix& a, const Matrix& b);          // A(n×k) · B(m×k)ᵀ
Matrix matmul_tn(const Matrix& a, const Matrix& b);          // A(k×n)ᵀ · B(k×m)

// entry (i,j) = cos(A_i, B_j); rows need not be pre-normalized.
Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b);

// Row-wise stabilized softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace cct
