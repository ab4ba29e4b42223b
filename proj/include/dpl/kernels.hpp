#pragma once

#include <cstddef>

#include "dpl/matrix.hpp"

namespace dpl {

// Dense kernels. The production entry points (dpl::kernels) parallelize over
// output rows with OpenMP; dpl::serial holds the plain single-threaded
// reference used by the tests and the benchmark. Both run the identical
// per-row inner loop, so their outputs are bitwise equal for any thread
// count. That property is what keeps whole training runs reproducible.

namespace kernels {

// c [m x n] = a [m x k] * b [k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// c [k x n] = a^T * b, with a [m x k], b [m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// c [m x r] = a * b^T, with a [m x n], b [r x n]
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t r);

// row-wise softmax with max subtraction; input checked finite
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

// out[r][c] = in[r][c] + bias[c]
void add_bias_rows(double* inout, const double* bias, std::size_t rows, std::size_t cols);

// x = max(x, 0)
void relu(double* inout, std::size_t n);

// g *= (activation > 0), elementwise
void relu_backward(double* grad, const double* activation, std::size_t n);

// out[c] = sum over rows of in[r][c]
void colsum(const double* in, double* out, std::size_t rows, std::size_t cols);

}  // namespace kernels

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t r);
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

}  // namespace serial

// Matrix-level operations used by the rest of the project.

// Row-simplex softmax; throws std::invalid_argument("non-finite logits") on
// non-finite input.
Matrix softmax_rows(const Matrix& logits);

// Smallest index attaining the row maximum. Throws on zero columns.
std::vector<int> argmax_rows(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);       // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);    // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);    // a * b^T

}  // namespace dpl
