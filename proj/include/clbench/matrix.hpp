#ifndef CLBENCH_MATRIX_HPP
#define CLBENCH_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "clbench/error.hpp"

namespace clbench {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: incompatible shapes " + shape_string(a) + " * " + shape_string(b));
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_transposed: incompatible shapes " + shape_string(a) + " * " +
                         shape_string(b) + "^T");
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) sum += arow[k] * brow[k];
            c(i, j) = sum;
        }
    }
    return c;
}

// C = A^T * B
inline Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw ShapeError("transposed_matmul: incompatible shapes " + shape_string(a) + "^T * " +
                         shape_string(b));
    Matrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.data.data() + i * c.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Result of normalizing a vector to unit euclidean length. A (near-)zero
// input cannot be normalized; it is returned as-is with `degenerate` set.
struct UnitVector {
    std::vector<double> values;
    double norm = 0.0;
    bool degenerate = false;
};

inline UnitVector l2_normalize(std::span<const double> x) {
    UnitVector out;
    out.values.assign(x.begin(), x.end());
    out.norm = norm2(x);
    if (out.norm < 1e-300) {
        out.degenerate = true;
        out.norm = 0.0;
        for (double& v : out.values) v = 0.0;
        return out;
    }
    for (double& v : out.values) v /= out.norm;
    return out;
}

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues and the orthogonal eigenvector matrix (columns are
// eigenvectors, a(orig) = V diag(w) V^T). Throws NumericError if the sweep
// limit is exhausted before convergence.
struct SymmetricEigen {
    std::vector<double> values;
    Matrix vectors;  // column j is the eigenvector for values[j]
};

inline SymmetricEigen jacobi_eigen(const Matrix& input, std::size_t max_sweeps = 100) {
    if (input.rows != input.cols) throw ShapeError("jacobi_eigen: matrix not square");
    const std::size_t n = input.rows;
    Matrix a = input;
    Matrix v = Matrix::identity(n);

    auto off_diag_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    double frob = 0.0;
    for (double v : a.data) frob += v * v;
    const double tolerance = 1e-13 * (std::sqrt(frob) + 1.0);

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        if (off_diag_norm() < tolerance) break;
        if (sweep + 1 == max_sweeps) throw NumericError("jacobi_eigen: no convergence");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
    out.vectors = std::move(v);
    return out;
}

}  // namespace clbench

#endif  // CLBENCH_MATRIX_HPP
