#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "formlab/common.hpp"

namespace formlab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

// Symmetric-by-use 2x2 matrix, row major: [[a, b], [c, d]].
struct Mat2 {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    Mat2() = default;
    Mat2(double a_, double b_, double c_, double d_) : a(a_), b(b_), c(c_), d(d_) {}

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 diag(double u, double v) { return {u, 0.0, 0.0, v}; }

    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Vec2 operator*(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }

    Mat2 transpose() const { return {a, c, b, d}; }
    double trace() const { return a + d; }
    double det() const { return a * d - b * c; }

    Mat2 inverse() const {
        double dt = det();
        if (dt == 0.0) throw Error(ErrorKind::numeric, "singular 2x2 matrix");
        double s = 1.0 / dt;
        return {d * s, -b * s, -c * s, a * s};
    }

    // Eigenvalues of the symmetrized matrix, smallest first.
    void sym_eigenvalues(double& lo, double& hi) const {
        double m = 0.5 * (a + d);
        double off = 0.5 * (b + c);
        double r = std::hypot(0.5 * (a - d), off);
        lo = m - r;
        hi = m + r;
    }
};

inline Mat2 outer(Vec2 u, Vec2 v) {
    return {u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y};
}

// Principal square root of an SPD 2x2 matrix (closed form).
inline Mat2 sqrt_spd(const Mat2& m) {
    double dt = m.det();
    if (dt < 0.0) throw Error(ErrorKind::numeric, "sqrt of non-PSD matrix");
    double s = std::sqrt(dt);
    double t = m.trace() + 2.0 * s;
    if (t <= 0.0) throw Error(ErrorKind::numeric, "sqrt of non-PSD matrix");
    double inv = 1.0 / std::sqrt(t);
    return Mat2{m.a + s, m.b, m.c, m.d + s} * inv;
}

// One tracked frame in model coordinates: one 2-vector per player row.
using FrameMatrix = std::vector<Vec2>;

using VecX = std::vector<double>;

// Minimal dense row-major matrix for the flattened 2d-dimensional cases.
class MatX {
public:
    MatX() = default;
    MatX(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    static MatX identity(std::size_t n) {
        MatX m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    bool operator==(const MatX& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

    MatX operator*(const MatX& o) const {
        if (cols_ != o.rows_) throw Error(ErrorKind::numeric, "matmul shape mismatch");
        MatX r(rows_, o.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < o.cols_; ++j) r(i, j) += a * o(k, j);
            }
        return r;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

// Cholesky factorization A = L L^T of a symmetric positive-definite matrix.
// ok() is false when a pivot is not strictly positive.
class Cholesky {
public:
    explicit Cholesky(const MatX& a) : n_(a.rows()), l_(a.rows(), a.rows()) {
        for (std::size_t j = 0; j < n_; ++j) {
            double diag = a(j, j);
            for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
            if (!(diag > 0.0) || !std::isfinite(diag)) {
                ok_ = false;
                return;
            }
            l_(j, j) = std::sqrt(diag);
            for (std::size_t i = j + 1; i < n_; ++i) {
                double s = a(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
                l_(i, j) = s / l_(j, j);
            }
        }
        ok_ = true;
    }

    bool ok() const { return ok_; }

    double log_det() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += std::log(l_(i, i));
        return 2.0 * s;
    }

    // (x - mu)^T A^{-1} (x - mu) via forward substitution.
    double quad_form(std::span<const double> x, std::span<const double> mu) const {
        std::vector<double> w(n_);
        double q = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            double s = x[i] - mu[i];
            for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * w[k];
            w[i] = s / l_(i, i);
            q += w[i] * w[i];
        }
        return q;
    }

private:
    std::size_t n_;
    MatX l_;
    bool ok_ = false;
};

inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v)
        if (x > m) m = x;
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace formlab
