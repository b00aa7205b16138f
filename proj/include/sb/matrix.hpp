// Dense row-major f64 matrix plus the handful of BLAS-backed products the
// network code needs. BLAS is pinned to one thread so summation order is
// fixed regardless of how the caller parallelizes.

#pragma once

#include <cblas.h>

#include <cstddef>
#include <stdexcept>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace sb {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    std::vector<double> row_vec(int i) const {
        return std::vector<double>(row(i), row(i) + cols);
    }
    void set_row(int i, const std::vector<double>& v) {
        if (static_cast<int>(v.size()) != cols) throw std::invalid_argument("set_row: size mismatch");
        std::copy(v.begin(), v.end(), row(i));
    }

    std::size_t size() const { return data.size(); }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

namespace detail {
inline void pin_blas_threads() {
    static const bool done = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)done;
}
} // namespace detail

/// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    detail::pin_blas_threads();
    Matrix c(a.rows, b.cols);
    if (a.rows == 0 || b.cols == 0 || a.cols == 0) return c;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, a.rows, b.cols, a.cols,
                1.0, a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
    return c;
}

/// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    detail::pin_blas_threads();
    Matrix c(a.rows, b.rows);
    if (a.rows == 0 || b.rows == 0 || a.cols == 0) return c;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, a.rows, b.rows, a.cols,
                1.0, a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
    return c;
}

/// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
    detail::pin_blas_threads();
    Matrix c(a.cols, b.cols);
    if (a.cols == 0 || b.cols == 0 || a.rows == 0) return c;
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, a.cols, b.cols, a.rows,
                1.0, a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
    return c;
}

} // namespace sb
