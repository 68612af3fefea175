#pragma once
// Dense f64 kernels shared by every scorer: a row-major Matrix, matmul,
// ReLU, affine-free layer norm and a cyclic Jacobi eigensolver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lite/error.hpp"

namespace lite {

inline constexpr double kDefaultLnEps = 1e-5;
inline constexpr double kDefaultEigTol = 1e-12;

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        check_dims();
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        check_dims();
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        check_dims();
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double> col(std::size_t c) const {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    void check_dims() const {
        if (rows_ < 1 || cols_ < 1) {
            throw ShapeError("Matrix: dimensions must be >= 1, got " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape_str() + " by " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& x : out.data()) x = std::max(0.0, x);
    return out;
}

inline void relu_inplace(std::span<double> v) noexcept {
    for (double& x : v) x = std::max(0.0, x);
}

/// Normalizes by the population variance; no learnable gain or bias.
inline std::vector<double> layer_norm(std::span<const double> v, double eps = kDefaultLnEps) {
    if (v.empty()) throw ContractError("layer_norm: empty input");
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n;
    const double denom = std::sqrt(var + eps);
    std::vector<double> out(v.size());
    // Guard 0/0 for a constant vector with eps == 0.
    if (denom == 0.0) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / denom;
    return out;
}

/// Backward of layer_norm given its output y and the normalizer sqrt(var+eps):
/// dx = (dy - mean(dy) - y * mean(dy*y)) / denom.
inline std::vector<double> layer_norm_backward(std::span<const double> y,
                                               std::span<const double> dy, double denom) {
    const std::size_t n = y.size();
    std::vector<double> dx(n, 0.0);
    if (denom == 0.0) return dx;
    double mean_dy = 0.0, mean_dyy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_dy += dy[i];
        mean_dyy += dy[i] * y[i];
    }
    mean_dy /= static_cast<double>(n);
    mean_dyy /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) dx[i] = (dy[i] - mean_dy - y[i] * mean_dyy) / denom;
    return dx;
}

/// sqrt(population variance + eps) of v; the divisor layer_norm applies.
inline double layer_norm_denominator(std::span<const double> v, double eps) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / n + eps);
}

inline double trace(const Matrix& m) {
    const std::size_t n = std::min(m.rows(), m.cols());
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += m(i, i);
    return t;
}

inline double frobenius_sq(const Matrix& m) {
    double acc = 0.0;
    for (double x : m.data()) acc += x * x;
    return acc;
}

/// All eigenvalues of a symmetric matrix, descending, by cyclic Jacobi
/// rotations. Iterates until every off-diagonal magnitude is below tol.
inline std::vector<double> symmetric_eigenvalues(const Matrix& m, double tol = kDefaultEigTol) {
    if (m.rows() != m.cols()) {
        throw ContractError("symmetric_eigenvalues: matrix is not square (" + m.shape_str() + ")");
    }
    const std::size_t n = m.rows();
    double scale = 0.0;
    for (double x : m.data()) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > tol * std::max(1.0, scale)) {
                throw ContractError("symmetric_eigenvalues: asymmetry at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
            }
        }
    }

    Matrix a = m;
    // Absolute tolerance is meaningless for huge entries; never ask for
    // better than a few ulps of the matrix scale.
    const double threshold = std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * scale);
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off < threshold) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < threshold * 1e-3) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
            }
        }
    }

    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

}  // namespace lite
