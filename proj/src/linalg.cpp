#include "cct/linalg.hpp"

#include <cmath>
#include <string>

namespace cct {

void check_finite(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NonFiniteValue(std::string(what) + ": non-finite entry at index " +
                                 std::to_string(i));
        }
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data size " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
    check_finite(data_, "Matrix");
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector l2_normalize(const Vector& v) {
    const double n = norm(v);
    if (n <= 0.0 || !std::isfinite(n)) {
        throw ZeroNormError("l2_normalize: zero-norm vector");
    }
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

void l2_normalize_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        const double n = norm(r);
        if (n <= 0.0 || !std::isfinite(n)) {
            throw ZeroNormError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        }
        for (double& x : r) x /= n;
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions disagree");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions disagree");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = dot(a.row(i), b.row(j));
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions disagree");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aki * b(k, j);
            }
        }
    }
    return out;
}

Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("cosine_sim_matrix: dimension mismatch");
    std::vector<double> na(a.rows()), nb(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        na[i] = norm(a.row(i));
        if (na[i] <= 0.0) throw ZeroNormError("cosine_sim_matrix: zero-norm row " +
                                              std::to_string(i) + " in left matrix");
    }
    for (std::size_t j = 0; j < b.rows(); ++j) {
        nb[j] = norm(b.row(j));
        if (nb[j] <= 0.0) throw ZeroNormError("cosine_sim_matrix: zero-norm row " +
                                              std::to_string(j) + " in right matrix");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = dot(a.row(i), b.row(j)) / (na[i] * nb[j]);
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double row_max = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) row_max = std::max(row_max, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out(i, j) = std::exp(logits(i, j) - row_max);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

}  // namespace cct
