#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpl/kernels.hpp"
#include "dpl/matrix.hpp"
#include "dpl/rng.hpp"

using namespace dpl;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = lo + (hi - lo) * rng.next_unit();
    return m;
}

}  // namespace

TEST_CASE("softmax: uniform logits give the uniform row") {
    Matrix z(1, 3);
    const Matrix p = softmax_rows(z);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
}

TEST_CASE("softmax: shift invariance") {
    Matrix a(1, 3, {1.0, 2.0, 3.0});
    Matrix b(1, 3, {101.0, 102.0, 103.0});
    const Matrix pa = softmax_rows(a);
    const Matrix pb = softmax_rows(b);
    CHECK(max_abs_diff(pa, pb) < 1e-12);
}

TEST_CASE("softmax: two-logit value against direct scalar evaluation") {
    Matrix z(1, 2, {1.0, 2.0});
    const Matrix p = softmax_rows(z);
    // independent scalar route
    const double e1 = std::exp(1.0), e2 = std::exp(2.0);
    CHECK(p(0, 0) == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-14));
    CHECK(p(0, 0) == doctest::Approx(0.268941).epsilon(1e-5));
    CHECK(p(0, 1) == doctest::Approx(0.731059).epsilon(1e-5));
}

TEST_CASE("softmax: rows sum to one for extreme finite inputs") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix z = random_matrix(rng, 1 + rep % 5, 2 + rep % 7, -700.0, 700.0);
        const Matrix p = softmax_rows(z);
        for (std::size_t i = 0; i < p.rows; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < p.cols; ++j) {
                // entries this far below the row max underflow to exactly 0
                CHECK(p(i, j) >= 0.0);
                CHECK(p(i, j) <= 1.0);
                sum += p(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax: entries strictly positive on moderate inputs") {
    Rng rng(8);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix z = random_matrix(rng, 3, 6, -30.0, 30.0);
        const Matrix p = softmax_rows(z);
        for (double v : p.data) {
            CHECK(v > 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("softmax: non-finite input is rejected") {
    Matrix z(1, 2, {1.0, std::numeric_limits<double>::infinity()});
    CHECK_THROWS_WITH_AS(softmax_rows(z), "non-finite logits", std::invalid_argument);
}

TEST_CASE("argmax: examples and tie-breaks") {
    CHECK(argmax_rows(Matrix(1, 2, {0.1, 0.9}))[0] == 1);
    CHECK(argmax_rows(Matrix(1, 2, {0.5, 0.5}))[0] == 0);
    CHECK(argmax_rows(Matrix(1, 3, {3.0, 1.0, 3.0}))[0] == 0);
    CHECK_THROWS_AS(argmax_rows(Matrix(2, 0)), std::invalid_argument);
}

TEST_CASE("argmax commutes with softmax") {
    Rng rng(11);
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix z = random_matrix(rng, 4, 6, -30.0, 30.0);
        CHECK(argmax_rows(z) == argmax_rows(softmax_rows(z)));
    }
}

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs |= c.next_u64() != d.next_u64();
    CHECK(differs);
}

TEST_CASE("rng: sub-streams differ by tag") {
    Rng a = Rng::stream(1, rng_tag::data);
    Rng b = Rng::stream(1, rng_tag::init);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs |= a.next_u64() != b.next_u64();
    CHECK(differs);
}

TEST_CASE("gaussian_sample: scale zero returns the mean exactly") {
    Rng rng(42);
    const std::vector<double> mean = {1.0, 2.0};
    CHECK(gaussian_sample(rng, mean, 0.0) == mean);
}

TEST_CASE("gaussian_sample: deterministic under a fixed seed") {
    Rng a(42), b(42);
    const std::vector<double> mean = {0.0, 0.0, 0.0};
    CHECK(gaussian_sample(a, mean, 2.5) == gaussian_sample(b, mean, 2.5));
}

TEST_CASE("gaussian_sample: negative scale is rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(gaussian_sample(rng, {0.0}, -1.0), std::invalid_argument);
}

TEST_CASE("gaussian_sample: sample mean of 1e5 draws is near zero") {
    Rng rng(123);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) sum += gaussian_sample(rng, {0.0}, 1.0)[0];
    CHECK(std::fabs(sum / 100000.0) < 0.02);
}

TEST_CASE("kernels: OpenMP and serial reference agree bitwise") {
    Rng rng(5);
    // shapes straddle the parallel-dispatch threshold on purpose
    const std::size_t shapes[][3] = {{3, 4, 5}, {64, 32, 16}, {128, 64, 64}, {300, 40, 50}};
    for (const auto& s : shapes) {
        const Matrix a = random_matrix(rng, s[0], s[1], -2.0, 2.0);
        const Matrix b = random_matrix(rng, s[1], s[2], -2.0, 2.0);
        Matrix expected(s[0], s[2]);
        serial::gemm_nn(a.data.data(), b.data.data(), expected.data.data(), s[0], s[1], s[2]);
        CHECK(matmul(a, b) == expected);

        const Matrix at = random_matrix(rng, s[1], s[0], -2.0, 2.0);
        Matrix expected_tn(s[0], s[2]);
        serial::gemm_tn(at.data.data(), b.data.data(), expected_tn.data.data(), s[1], s[0], s[2]);
        CHECK(matmul_tn(at, b) == expected_tn);

        const Matrix bt = random_matrix(rng, s[2], s[1], -2.0, 2.0);
        Matrix expected_nt(s[0], s[2]);
        serial::gemm_nt(a.data.data(), bt.data.data(), expected_nt.data.data(), s[0], s[1], s[2]);
        CHECK(matmul_nt(a, bt) == expected_nt);
    }
}

TEST_CASE("kernels: parallel softmax equals serial softmax bitwise") {
    Rng rng(6);
    const Matrix z = random_matrix(rng, 500, 40, -50.0, 50.0);
    Matrix expected(z.rows, z.cols);
    serial::softmax_rows(z.data.data(), expected.data.data(), z.rows, z.cols);
    CHECK(softmax_rows(z) == expected);
}

TEST_CASE("matmul against a hand-rolled triple loop") {
    Rng rng(9);
    const Matrix a = random_matrix(rng, 7, 5, -3.0, 3.0);
    const Matrix b = random_matrix(rng, 5, 4, -3.0, 3.0);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-13));
        }
    }
}
