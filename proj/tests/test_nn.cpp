#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "dpl/checkpoint.hpp"
#include "dpl/mlp.hpp"
#include "dpl/optim.hpp"
#include "dpl/rng.hpp"

using namespace dpl;

namespace {

// Independent forward oracle: plain nested loops, no shared code with the
// library kernels.
Matrix oracle_forward(const MlpParams& params, const Matrix& x) {
    std::vector<double> h(x.data);
    std::size_t rows = x.rows, cols = x.cols;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        std::vector<double> next(rows * layer.weight.cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < layer.weight.cols; ++j) {
                double acc = layer.bias[j];
                for (std::size_t k = 0; k < cols; ++k) {
                    acc += h[i * cols + k] * layer.weight(k, j);
                }
                if (l + 1 < params.layers.size() && acc < 0.0) acc = 0.0;
                next[i * layer.weight.cols + j] = acc;
            }
        }
        h = std::move(next);
        cols = layer.weight.cols;
    }
    return Matrix(rows, cols, std::move(h));
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1e-6, std::fabs(a), std::fabs(b)});
}

// loss(params) = sum_ij g[ij] * logits[ij] for a fixed g, so the analytic
// gradient of the loss on the logits is exactly g.
double linear_probe_loss(const MlpParams& params, const Matrix& x, const Matrix& g) {
    const Matrix logits = forward(params, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) acc += g.data[i] * logits.data[i];
    return acc;
}

double* param_entry(MlpParams& params, std::size_t flat) {
    for (auto& layer : params.layers) {
        if (flat < layer.weight.data.size()) return &layer.weight.data[flat];
        flat -= layer.weight.data.size();
        if (flat < layer.bias.size()) return &layer.bias[flat];
        flat -= layer.bias.size();
    }
    return nullptr;
}

const double* param_entry(const MlpParams& params, std::size_t flat) {
    return param_entry(const_cast<MlpParams&>(params), flat);
}

}  // namespace

TEST_CASE("forward: zero parameters give zero logits") {
    MlpParams params;
    params.layers.push_back({Matrix(3, 4), std::vector<double>(4, 0.0)});
    params.layers.push_back({Matrix(4, 2), std::vector<double>(2, 0.0)});
    Matrix x(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix out = forward(params, x);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("forward: identity single layer") {
    MlpParams params;
    Matrix w(2, 2);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    params.layers.push_back({w, {0.0, 0.0}});
    Matrix x(1, 2, {1.0, 2.0});
    const Matrix out = forward(params, x);
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 2.0);
}

TEST_CASE("forward: dimension mismatch is rejected") {
    Rng rng(3);
    MlpParams params = init_mlp({4, 8, 2}, rng);
    CHECK_THROWS_AS(forward(params, Matrix(1, 3)), std::invalid_argument);
}

TEST_CASE("forward matches the independent oracle") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        MlpParams params = init_mlp({5, 16, 8, 3}, rng);
        Matrix x(4, 5);
        for (double& v : x.data) v = 3.0 * rng.next_gaussian();
        const Matrix a = forward(params, x);
        const Matrix b = oracle_forward(params, x);
        CHECK(max_abs_diff(a, b) < 1e-12);
    }
}

TEST_CASE("backward: zero upstream gradient gives zero parameter gradients") {
    Rng rng(21);
    MlpParams params = init_mlp({3, 8, 4}, rng);
    Matrix x(2, 3);
    for (double& v : x.data) v = rng.next_gaussian();
    const MlpGrads grads = backward(params, x, Matrix(2, 4));
    CHECK(max_abs_diff(grads, zeros_like(params)) == 0.0);
}

TEST_CASE("backward: linear layer weight gradient is x^T g") {
    MlpParams params;
    params.layers.push_back({Matrix(3, 2), {0.0, 0.0}});
    Matrix x(1, 3, {0.5, -1.5, 2.0});
    Matrix g(1, 2, {0.7, -0.2});
    const MlpGrads grads = backward(params, x, g);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(grads.layers[0].weight(k, j) == x(0, k) * g(0, j));
        }
    }
    CHECK(grads.layers[0].bias[0] == 0.7);
    CHECK(grads.layers[0].bias[1] == -0.2);
}

TEST_CASE("backward matches central finite differences") {
    Rng rng(31);
    const double h = 1e-5;
    for (int rep = 0; rep < 8; ++rep) {
        const std::size_t n = 1 + rng.below(8);
        std::vector<std::size_t> dims = {2 + rng.below(6), 2 + rng.below(31), 2 + rng.below(31),
                                         2 + rng.below(6)};
        if (rep % 2 == 0) dims.erase(dims.begin() + 1);  // also cover 2-layer nets
        MlpParams params = init_mlp(dims, rng);
        Matrix x(n, dims.front());
        for (double& v : x.data) v = 2.0 * rng.next_gaussian();
        Matrix g(n, dims.back());
        for (double& v : g.data) v = rng.next_gaussian();

        ForwardCache cache;
        forward(params, x, cache);
        const MlpGrads analytic = backward(params, cache, g);

        std::size_t total = 0;
        for (const auto& layer : params.layers) total += layer.weight.data.size() + layer.bias.size();
        for (std::size_t flat = 0; flat < total; ++flat) {
            MlpParams probe = params;
            double* entry = param_entry(probe, flat);
            const double saved = *entry;
            *entry = saved + h;
            const double up = linear_probe_loss(probe, x, g);
            *entry = saved - h;
            const double down = linear_probe_loss(probe, x, g);
            const double numeric = (up - down) / (2.0 * h);
            const double exact = *param_entry(analytic, flat);
            CHECK(rel_err(exact, numeric) < 1e-4);
        }
    }
}

TEST_CASE("sgd nesterov: lr 0 with zero velocity is the identity") {
    Rng rng(41);
    MlpParams params = init_mlp({3, 5, 2}, rng);
    const MlpParams before = params;
    OptimState opt = make_optim_state(params, 0.9, 0.0, 0.1);
    MlpGrads grads = zeros_like(params);
    for (auto& layer : grads.layers) {
        for (double& v : layer.weight.data) v = 1.0;
    }
    sgd_nesterov_step(params, grads, opt, 0.0);
    CHECK(params == before);
}

TEST_CASE("sgd nesterov: zero momentum reduces to plain sgd") {
    MlpParams params;
    params.layers.push_back({Matrix(1, 1, {2.0}), {0.0}});
    OptimState opt = make_optim_state(params, 0.0, 0.0, 0.1);
    MlpGrads grads;
    grads.layers.push_back({Matrix(1, 1, {0.5}), {0.0}});
    sgd_nesterov_step(params, grads, opt, 0.1);
    CHECK(params.layers[0].weight(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5).epsilon(1e-15));
}

TEST_CASE("sgd nesterov: two steps match the scalar recursion") {
    MlpParams params;
    params.layers.push_back({Matrix(1, 1, {1.0}), {0.0}});
    OptimState opt = make_optim_state(params, 0.9, 0.0, 0.1);
    MlpGrads grads;
    grads.layers.push_back({Matrix(1, 1, {1.0}), {0.0}});

    // hand-rolled recursion: v <- m v + g ; p <- p - lr (g + m v)
    double p = 1.0, v = 0.0;
    for (int step = 0; step < 2; ++step) {
        v = 0.9 * v + 1.0;
        p -= 0.1 * (1.0 + 0.9 * v);
        sgd_nesterov_step(params, grads, opt, 0.1);
        CHECK(params.layers[0].weight(0, 0) == doctest::Approx(p).epsilon(1e-15));
    }
    CHECK(params.layers[0].weight(0, 0) == doctest::Approx(0.539).epsilon(1e-12));
}

TEST_CASE("sgd nesterov: non-finite gradients raise diverged") {
    MlpParams params;
    params.layers.push_back({Matrix(1, 1, {1.0}), {0.0}});
    OptimState opt = make_optim_state(params, 0.9, 0.0, 0.1);
    MlpGrads grads;
    grads.layers.push_back({Matrix(1, 1, {std::nan("")}), {0.0}});
    CHECK_THROWS_WITH_AS(sgd_nesterov_step(params, grads, opt, 0.1), "diverged", std::runtime_error);
}

TEST_CASE("cosine schedule endpoints and monotonicity") {
    CHECK(cosine_lr(0, 100, 0.03) == 0.03);
    CHECK(cosine_lr(100, 100, 0.03) == doctest::Approx(0.03 * 0.19509032201612825).epsilon(1e-12));
    double prev = cosine_lr(0, 100, 1.0);
    for (std::size_t k = 1; k <= 100; ++k) {
        const double lr = cosine_lr(k, 100, 1.0);
        CHECK(lr < prev);
        CHECK(lr > 0.0);
        prev = lr;
    }
    CHECK_THROWS_AS(cosine_lr(101, 100, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(0, 0, 1.0), std::invalid_argument);
}

TEST_CASE("ema: decay edge cases") {
    Rng rng(51);
    MlpParams student = init_mlp({2, 3, 2}, rng);
    MlpParams other = init_mlp({2, 3, 2}, rng);

    EmaTeacher frozen{other, 1.0};  // decay 1 keeps the teacher unchanged
    ema_update(frozen, student);
    CHECK(frozen.shadow == other);

    EmaTeacher copying{other, 0.0};  // decay 0 copies the student
    ema_update(copying, student);
    CHECK(copying.shadow == student);
}

TEST_CASE("ema: scalar update value") {
    MlpParams student;
    student.layers.push_back({Matrix(1, 1, {1.0}), {0.0}});
    MlpParams teacher0;
    teacher0.layers.push_back({Matrix(1, 1, {0.0}), {0.0}});
    EmaTeacher teacher{teacher0, 0.9};
    ema_update(teacher, student);
    CHECK(teacher.shadow.layers[0].weight(0, 0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("ema: geometric contraction toward a fixed student") {
    // decay 0.5 and student 0 make the contraction exact in binary
    MlpParams student;
    student.layers.push_back({Matrix(1, 1, {0.0}), {0.0}});
    MlpParams teacher0;
    teacher0.layers.push_back({Matrix(1, 1, {1.0}), {0.0}});
    EmaTeacher teacher{teacher0, 0.5};
    for (int k = 1; k <= 40; ++k) {
        ema_update(teacher, student);
        CHECK(teacher.shadow.layers[0].weight(0, 0) == std::ldexp(1.0, -k));
    }

    // generic decay contracts within float tolerance
    Rng rng(61);
    MlpParams s = init_mlp({3, 4, 2}, rng);
    EmaTeacher t = make_ema_teacher(init_mlp({3, 4, 2}, rng), 0.97);
    const double d0 = max_abs_diff(t.shadow, s);
    for (int k = 1; k <= 50; ++k) {
        ema_update(t, s);
        CHECK(max_abs_diff(t.shadow, s) <= std::pow(0.97, k) * d0 * (1.0 + 1e-10));
    }
}

TEST_CASE("init_mlp is deterministic and finite") {
    Rng a(99), b(99);
    const MlpParams pa = init_mlp({8, 64, 64, 10}, a);
    const MlpParams pb = init_mlp({8, 64, 64, 10}, b);
    CHECK(pa == pb);
    CHECK(pa.all_finite());
    for (const auto& layer : pa.layers) {
        for (double bias : layer.bias) CHECK(bias == 0.0);
    }
}

TEST_CASE("checkpoint round-trips bitwise") {
    Rng rng(71);
    const MlpParams params = init_mlp({6, 32, 5}, rng);
    const auto dir = std::filesystem::temp_directory_path() / "dpl_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.ckpt";
    save_checkpoint(path, params, {{"note", "unit-test"}});
    const MlpParams loaded = load_checkpoint(path);
    CHECK(loaded == params);
    CHECK(std::filesystem::exists(path.string() + ".json"));

    // corrupt magic is rejected
    const auto bad = dir / "bad.ckpt";
    std::filesystem::copy_file(path, bad, std::filesystem::copy_options::overwrite_existing);
    {
        std::FILE* f = std::fopen(bad.c_str(), "r+b");
        REQUIRE(f);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    std::filesystem::remove_all(dir);
}
