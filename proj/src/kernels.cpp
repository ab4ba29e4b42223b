#include "dpl/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dpl {

namespace {

// Per-row bodies shared by the serial reference and the OpenMP kernels.
// Keeping a single definition guarantees the two variants produce bitwise
// identical results: the parallel version only partitions rows across
// threads, never reorders arithmetic inside a row.

inline void gemm_nn_row(const double* a, const double* b, double* c,
                        std::size_t i, std::size_t k, std::size_t n) {
    const double* a_row = a + i * k;
    double* c_row = c + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double a_ip = a_row[p];
        const double* b_row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
            c_row[j] += a_ip * b_row[j];
        }
    }
}

inline void gemm_tn_row(const double* a, const double* b, double* c,
                        std::size_t p, std::size_t m, std::size_t k, std::size_t n) {
    double* c_row = c + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double a_ip = a[i * k + p];
        const double* b_row = b + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            c_row[j] += a_ip * b_row[j];
        }
    }
}

inline void gemm_nt_row(const double* a, const double* b, double* c,
                        std::size_t i, std::size_t n, std::size_t r) {
    const double* a_row = a + i * n;
    double* c_row = c + i * r;
    for (std::size_t j = 0; j < r; ++j) {
        const double* b_row = b + j * n;
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += a_row[t] * b_row[t];
        c_row[j] = acc;
    }
}

inline void softmax_row(const double* in, double* out, std::size_t i, std::size_t cols) {
    const double* x = in + i * cols;
    double* y = out + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

// Batches this small are not worth a parallel region.
inline bool worth_parallel(std::size_t rows, std::size_t work_per_row) {
    return rows >= 2 && rows * work_per_row >= (std::size_t{1} << 16);
}

}  // namespace

namespace kernels {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    if (worth_parallel(m, k * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
            gemm_nn_row(a, b, c, static_cast<std::size_t>(i), k, n);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n);
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    if (worth_parallel(k, m * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(k); ++p) {
            gemm_tn_row(a, b, c, static_cast<std::size_t>(p), m, k, n);
        }
    } else {
        for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a, b, c, p, m, k, n);
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t r) {
    if (worth_parallel(m, n * r)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
            gemm_nt_row(a, b, c, static_cast<std::size_t>(i), n, r);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, n, r);
    }
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
    if (worth_parallel(rows, cols * 8)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows); ++i) {
            softmax_row(in, out, static_cast<std::size_t>(i), cols);
        }
    } else {
        for (std::size_t i = 0; i < rows; ++i) softmax_row(in, out, i, cols);
    }
}

void add_bias_rows(double* inout, const double* bias, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols >= (std::size_t{1} << 16))
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows); ++i) {
        double* row = inout + static_cast<std::size_t>(i) * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += bias[j];
    }
}

void relu(double* inout, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (inout[i] < 0.0) inout[i] = 0.0;
    }
}

void relu_backward(double* grad, const double* activation, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (activation[i] <= 0.0) grad[i] = 0.0;
    }
}

void colsum(const double* in, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = in + i * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
    }
}

}  // namespace kernels

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) gemm_nn_row(a, b, c, i, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a, b, c, p, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t r) {
    for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a, b, c, i, n, r);
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) softmax_row(in, out, i, cols);
}

}  // namespace serial

Matrix softmax_rows(const Matrix& logits) {
    if (!logits.all_finite()) throw std::invalid_argument("non-finite logits");
    Matrix out(logits.rows, logits.cols);
    kernels::softmax_rows(logits.data.data(), out.data.data(), logits.rows, logits.cols);
    return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
    if (m.cols == 0) throw std::invalid_argument("argmax_rows: empty row");
    std::vector<int> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto row = m.row(i);
        // ties break to the smallest index
        std::size_t best = 0;
        for (std::size_t j = 1; j < m.cols; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix c(a.rows, b.cols);
    kernels::gemm_nn(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: row count mismatch");
    Matrix c(a.cols, b.cols);
    kernels::gemm_tn(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: column count mismatch");
    Matrix c(a.rows, b.rows);
    kernels::gemm_nt(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.rows);
    return c;
}

}  // namespace dpl
