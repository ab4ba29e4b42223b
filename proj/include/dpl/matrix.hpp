#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dpl {

// Dense row-major double matrix. The single numeric container used for
// features, logits, probabilities and gradients throughout the project.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool all_finite() const;

    bool operator==(const Matrix&) const = default;
};

// Elementwise |a - b| max over two equally shaped matrices.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace dpl
