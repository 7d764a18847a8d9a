#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "nard/errors.hpp"

namespace nard {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.  Sizes are fixed at construction;
/// entries are mutable.  All shape checks throw precondition_error.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols)
                throw precondition_error("matrix initializer rows have unequal lengths");
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool empty() const { return rows == 0 || cols == 0; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(const Vector& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw precondition_error(msg);
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "matrix sum: shape mismatch");
    Matrix r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
    return r;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "matrix difference: shape mismatch");
    Matrix r = a;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

inline Matrix operator*(double s, const Matrix& a) {
    Matrix r = a;
    for (double& v : r.data) v *= s;
    return r;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matrix product: inner dimensions differ");
    Matrix r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) r(i, j) += aik * b(k, j);
        }
    return r;
}

inline Vector operator*(const Matrix& a, const Vector& x) {
    require(a.cols == x.size(), "matrix-vector product: dimension mismatch");
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) y[i] += a(i, j) * x[j];
    return y;
}

inline Vector operator+(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "vector sum: length mismatch");
    Vector r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    return r;
}

inline Vector operator-(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "vector difference: length mismatch");
    Vector r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}

inline Matrix transpose(const Matrix& a) {
    Matrix r(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) r(j, i) = a(i, j);
    return r;
}

inline double trace(const Matrix& a) {
    require(a.rows == a.cols, "trace: matrix not square");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) t += a(i, i);
    return t;
}

/// Largest absolute entry.
inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs(const Vector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

inline double dot(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const Vector& a) { return dot(a, a); }

/// (A + Aᵀ)/2, for keeping covariance recursions symmetric.
inline Matrix symmetrize(const Matrix& a) {
    require(a.rows == a.cols, "symmetrize: matrix not square");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
    return r;
}

/// Max asymmetry |a_ij - a_ji| relative to the largest entry.
inline bool is_symmetric(const Matrix& a, double tol) {
    if (a.rows != a.cols) return false;
    const double scale = std::max(max_abs(a), 1e-300);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = i + 1; j < a.cols; ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) return false;
    return true;
}

inline bool all_finite(const Matrix& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Vector& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace nard
