#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace madgnn {

// Raised when two operands disagree on shape. The message names both.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a value that must be finite is not.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised for invalid user-facing configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Small by design: every matrix in this
// library is at most a few dozen rows/columns.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: " + std::to_string(data_.size()) + " entries for shape " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, 0.0); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix scalar(double v) { return Matrix(1, 1, v); }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    // Value of a 1x1 matrix.
    [[nodiscard]] double item() const {
        if (rows_ != 1 || cols_ != 1) throw ShapeError("item: matrix is " + shape_string());
        return data_[0];
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    [[nodiscard]] std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    // Bit-exact equality: same shape and identical entries.
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": lhs " + a.shape_string() + " vs rhs " +
                         b.shape_string());
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: lhs " + a.shape_string() + " vs rhs " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = &out(i, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* br = &b.data()[k * m];
            for (std::size_t j = 0; j < m; ++j) o[j] += aik * br[j];
        }
    }
    return out;
}

// a^T b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: lhs " + a.shape_string() + " vs rhs " + b.shape_string());
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t m = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* br = &b.data()[k * m];
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            double* o = &out(i, 0);
            for (std::size_t j = 0; j < m; ++j) o[j] += aki * br[j];
        }
    }
    return out;
}

// a b^T without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: lhs " + a.shape_string() + " vs rhs " + b.shape_string());
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ar = &a.data()[i * n];
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* br = &b.data()[j * n];
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += ar[k] * br[k];
            out(i, j) = s;
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
    return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b[k];
    return out;
}

inline Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b[k];
    return out;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_assign");
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    return a;
}

// Element-wise matrix p-norm (p >= 1); p = 2 is the Frobenius norm.
inline double entry_norm(const Matrix& a, double p = 2.0) {
    if (!(p >= 1.0)) throw std::invalid_argument("entry_norm: p must be >= 1");
    if (p == 2.0) {
        double s = 0.0;
        for (double v : a.data()) s += v * v;
        return std::sqrt(s);
    }
    if (p == 1.0) {
        double s = 0.0;
        for (double v : a.data()) s += std::abs(v);
        return s;
    }
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : a.data()) m = std::max(m, std::abs(v));
        return m;
    }
    double s = 0.0;
    for (double v : a.data()) s += std::pow(std::abs(v), p);
    return std::pow(s, 1.0 / p);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline Matrix row_slice(const Matrix& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) {
        throw ShapeError("row_slice: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + a.shape_string());
    }
    Matrix out(count, a.cols());
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()), count * a.cols(),
                out.data().begin());
    return out;
}

inline Matrix gather_rows(const Matrix& a, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), a.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= a.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of " +
                             a.shape_string());
        }
        std::copy_n(a.row(idx[r]).begin(), a.cols(), out.row(r).begin());
    }
    return out;
}

}  // namespace madgnn
