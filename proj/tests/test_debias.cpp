#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpl/debias.hpp"
#include "dpl/rng.hpp"

using namespace dpl;

namespace {

// Independent cross-entropy oracle on shifted logits, long double route.
double oracle_cross_entropy(const std::vector<double>& z, int y) {
    long double mx = z[0];
    for (double v : z) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    for (double v : z) sum += std::exp(static_cast<long double>(v) - mx);
    return static_cast<double>(-(static_cast<long double>(z[static_cast<std::size_t>(y)]) - mx -
                                 std::log(sum)));
}

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (double& v : p) {
        v = 0.05 + rng.next_unit();
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace

TEST_CASE("debias_logits: lambda zero returns the input unchanged") {
    DebiasState state = DebiasState::uniform(3, 0.9, 0.0, 0.0);
    const std::vector<double> z = {0.3, -1.2, 4.0};
    CHECK(debias_logits(z, state) == z);
}

TEST_CASE("debias_logits: uniform p_hat shifts every logit equally") {
    DebiasState state = DebiasState::uniform(2, 0.9, 0.7, 0.7);
    const std::vector<double> z = {0.4, 1.1};
    const auto out = debias_logits(z, state);
    const double shift = 0.7 * std::log(2.0);
    CHECK(out[0] == doctest::Approx(z[0] + shift).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(z[1] + shift).epsilon(1e-14));
}

TEST_CASE("debias_logits: scalar example") {
    DebiasState state = DebiasState::uniform(2, 0.9, 0.5, 0.5);
    state.p_hat = {0.7, 0.3};
    const auto out = debias_logits({1.0, 1.2}, state);
    // independent scalar route
    CHECK(out[0] == doctest::Approx(1.0 - 0.5 * std::log(0.7)).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(1.2 - 0.5 * std::log(0.3)).epsilon(1e-14));
    CHECK(out[0] == doctest::Approx(1.178337).epsilon(1e-5));
    CHECK(out[1] == doctest::Approx(1.801986).epsilon(1e-5));
}

TEST_CASE("debias pairwise identity over random states") {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t classes = 2 + rng.below(9);
        const double lambda = rng.next_unit() * 2.0;
        DebiasState state = DebiasState::uniform(classes, 0.9, lambda, lambda);
        state.p_hat = random_simplex(rng, classes);
        std::vector<double> z(classes);
        for (double& v : z) v = 5.0 * rng.next_gaussian();
        const auto d = debias_logits(z, state);
        const std::size_t a = rng.below(classes);
        const std::size_t b = rng.below(classes);
        const double lhs = (d[a] - d[b]) - (z[a] - z[b]);
        const double rhs = -lambda * std::log(state.p_hat[a] / state.p_hat[b]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("update_p_hat: momentum zero adopts the batch mean") {
    DebiasState state = DebiasState::uniform(2, 0.0, 0.5, 0.5);
    Matrix probs(2, 2, {0.8, 0.2, 0.6, 0.4});
    update_p_hat(state, probs);
    CHECK(state.p_hat[0] == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(state.p_hat[1] == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("update_p_hat: batch mean equal to p_hat is a fixed point") {
    DebiasState state = DebiasState::uniform(2, 0.9, 0.5, 0.5);
    state.p_hat = {0.6, 0.4};
    Matrix probs(1, 2, {0.6, 0.4});
    update_p_hat(state, probs);
    CHECK(state.p_hat[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(state.p_hat[1] == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("update_p_hat: scalar example") {
    DebiasState state = DebiasState::uniform(2, 0.9, 0.5, 0.5);
    state.p_hat = {0.5, 0.5};
    Matrix probs(1, 2, {0.9, 0.1});
    update_p_hat(state, probs);
    CHECK(state.p_hat[0] == doctest::Approx(0.54).epsilon(1e-14));
    CHECK(state.p_hat[1] == doctest::Approx(0.46).epsilon(1e-14));
}

TEST_CASE("update_p_hat: empty batch is a no-op") {
    DebiasState state = DebiasState::uniform(3, 0.9, 0.5, 0.5);
    const auto before = state.p_hat;
    update_p_hat(state, Matrix(0, 3));
    CHECK(state.p_hat == before);
}

TEST_CASE("update_p_hat: simplex preserved over many random updates") {
    Rng rng(7);
    DebiasState state = DebiasState::uniform(5, 0.99, 0.5, 0.5);
    for (int rep = 0; rep < 100000; ++rep) {
        Matrix probs(2, 5);
        for (std::size_t i = 0; i < 2; ++i) {
            auto p = random_simplex(rng, 5);
            std::copy(p.begin(), p.end(), probs.row(i).begin());
        }
        update_p_hat(state, probs);
    }
    double sum = 0.0;
    for (double v : state.p_hat) {
        CHECK(v >= kPHatFloor);
        sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
}

TEST_CASE("update_p_hat: closed form under a constant batch mean") {
    Rng rng(11);
    for (double m : {0.0, 0.5, 0.9, 0.99, 0.999}) {
        DebiasState state = DebiasState::uniform(4, m, 0.5, 0.5);
        const auto p0 = state.p_hat;
        const auto q = random_simplex(rng, 4);
        Matrix probs(1, 4, std::vector<double>(q));
        const int K = 1000;
        for (int k = 1; k <= K; ++k) {
            update_p_hat(state, probs);
            if (k == 1 || k == 10 || k == K) {
                const double mk = std::pow(m, k);
                for (std::size_t j = 0; j < 4; ++j) {
                    const double expected = mk * p0[j] + (1.0 - mk) * q[j];
                    CHECK(std::fabs(state.p_hat[j] - expected) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("adaptive_margins: lambda zero gives zero margins") {
    DebiasState state = DebiasState::uniform(4, 0.9, 0.5, 0.0);
    for (double d : adaptive_margins(state).delta) CHECK(d == 0.0);
}

TEST_CASE("adaptive_margins: uniform p_hat gives log C") {
    DebiasState state = DebiasState::uniform(10, 0.9, 1.0, 1.0);
    for (double d : adaptive_margins(state).delta) {
        CHECK(d == doctest::Approx(std::log(10.0)).epsilon(1e-12));
        CHECK(d == doctest::Approx(2.302585).epsilon(1e-6));
    }
}

TEST_CASE("adaptive_margins: scalar example") {
    DebiasState state = DebiasState::uniform(2, 0.9, 0.5, 0.5);
    state.p_hat = {0.7, 0.3};
    const auto margins = adaptive_margins(state);
    CHECK(margins.delta[0] == doctest::Approx(0.5 * std::log(1.0 / 0.7)).epsilon(1e-14));
    CHECK(margins.delta[1] == doctest::Approx(0.5 * std::log(1.0 / 0.3)).epsilon(1e-14));
    CHECK(margins.delta[0] == doctest::Approx(0.178337).epsilon(1e-5));
    CHECK(margins.delta[1] == doctest::Approx(0.601986).epsilon(1e-5));
}

TEST_CASE("marginal_loss: zero margins reduce to cross-entropy") {
    Rng rng(13);
    Margins zero;
    zero.delta.assign(6, 0.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> z(6);
        for (double& v : z) v = 10.0 * rng.next_gaussian();
        const int y = static_cast<int>(rng.below(6));
        const auto [loss, grad] = marginal_loss(z, y, zero);
        CHECK(loss == doctest::Approx(oracle_cross_entropy(z, y)).epsilon(1e-12));
    }
}

TEST_CASE("marginal_loss: constant margins cancel") {
    Margins flat;
    flat.delta.assign(4, 1.7);
    Margins zero;
    zero.delta.assign(4, 0.0);
    const std::vector<double> z = {0.2, -0.4, 1.9, 0.0};
    const auto [with_flat, g1] = marginal_loss(z, 2, flat);
    const auto [without, g2] = marginal_loss(z, 2, zero);
    CHECK(with_flat == doctest::Approx(without).epsilon(1e-12));
    for (std::size_t j = 0; j < 4; ++j) CHECK(g1[j] == doctest::Approx(g2[j]).epsilon(1e-12));
}

TEST_CASE("marginal_loss: scalar example") {
    Margins margins;
    margins.delta = {0.5, 0.0};
    const auto [loss, grad] = marginal_loss({2.0, 0.0}, 0, margins);
    CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-1.5))).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.201413).epsilon(1e-5));
}

TEST_CASE("marginal_loss equals cross-entropy on shifted logits") {
    Rng rng(17);
    for (int rep = 0; rep < 10000; ++rep) {
        const std::size_t classes = 2 + rng.below(9);
        std::vector<double> z(classes), delta(classes), shifted(classes);
        for (std::size_t j = 0; j < classes; ++j) {
            z[j] = 20.0 * rng.next_gaussian();
            delta[j] = 3.0 * rng.next_unit();
            shifted[j] = z[j] - delta[j];
        }
        const int y = static_cast<int>(rng.below(classes));
        Margins margins;
        margins.delta = delta;
        const auto [loss, grad] = marginal_loss(z, y, margins);
        CHECK(std::fabs(loss - oracle_cross_entropy(shifted, y)) < 1e-12);
    }
}

TEST_CASE("marginal_loss gradient matches central finite differences") {
    Rng rng(19);
    const double h = 1e-6;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t classes = 2 + rng.below(7);
        std::vector<double> z(classes), delta(classes);
        for (std::size_t j = 0; j < classes; ++j) {
            z[j] = 3.0 * rng.next_gaussian();
            delta[j] = rng.next_unit();
        }
        const int y = static_cast<int>(rng.below(classes));
        Margins margins;
        margins.delta = delta;
        const auto [loss, grad] = marginal_loss(z, y, margins);
        for (std::size_t j = 0; j < classes; ++j) {
            auto up = z, down = z;
            up[j] += h;
            down[j] -= h;
            const double numeric =
                (marginal_loss(up, y, margins).first - marginal_loss(down, y, margins).first) / (2.0 * h);
            const double denom = std::max({1e-3, std::fabs(grad[j]), std::fabs(numeric)});
            CHECK(std::fabs(grad[j] - numeric) / denom < 1e-6);
        }
    }
}

TEST_CASE("uniform p_hat is a no-op for decisions and losses") {
    Rng rng(23);
    DebiasState state = DebiasState::uniform(8, 0.9, 0.5, 0.5);
    const Margins margins = adaptive_margins(state);
    Margins zero;
    zero.delta.assign(8, 0.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> z(8);
        for (double& v : z) v = 4.0 * rng.next_gaussian();
        const auto d = debias_logits(z, state);
        std::size_t am_z = 0, am_d = 0;
        for (std::size_t j = 1; j < 8; ++j) {
            if (z[j] > z[am_z]) am_z = j;
            if (d[j] > d[am_d]) am_d = j;
        }
        CHECK(am_z == am_d);
        const int y = static_cast<int>(rng.below(8));
        CHECK(marginal_loss(z, y, margins).first ==
              doctest::Approx(marginal_loss(z, y, zero).first).epsilon(1e-9));
    }
}

TEST_CASE("pseudo_label: threshold comparisons") {
    CHECK(pseudo_label({0.99, 0.01}, 0.95).label == 0);
    CHECK(pseudo_label({0.99, 0.01}, 0.95).accepted);
    CHECK(pseudo_label({0.6, 0.4}, 0.95).label == 0);
    CHECK(!pseudo_label({0.6, 0.4}, 0.95).accepted);
    // the comparator is greater-or-equal
    CHECK(pseudo_label({0.95, 0.05}, 0.95).accepted);
}

TEST_CASE("distribution_alignment: fixed points and the scalar example") {
    const std::vector<double> uniform = {0.5, 0.5};
    CHECK(distribution_alignment({0.6, 0.4}, uniform, uniform)[0] == doctest::Approx(0.6).epsilon(1e-14));

    const auto out = distribution_alignment({0.6, 0.4}, {0.5, 0.5}, {0.8, 0.2});
    // independent scalar route: [0.6*0.5/0.8, 0.4*0.5/0.2] normalized
    const double a = 0.6 * 0.5 / 0.8, b = 0.4 * 0.5 / 0.2;
    CHECK(out[0] == doctest::Approx(a / (a + b)).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(b / (a + b)).epsilon(1e-14));
    CHECK(out[0] == doctest::Approx(0.27273).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(0.72727).epsilon(1e-4));

    const std::vector<double> u3 = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto same = distribution_alignment(u3, u3, u3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(same[j] == doctest::Approx(u3[j]).epsilon(1e-14));
}

TEST_CASE("logit_adjust: edge cases and the scalar example") {
    const std::vector<double> z = {1.0, 1.0};
    CHECK(logit_adjust(z, {0.9, 0.1}, 0.0) == z);

    const auto shifted = logit_adjust({2.0, 1.0}, {0.5, 0.5}, 1.0);
    CHECK(shifted[0] - shifted[1] == doctest::Approx(1.0).epsilon(1e-14));  // argmax unchanged

    const auto out = logit_adjust(z, {0.9, 0.1}, 1.0);
    CHECK(out[0] == doctest::Approx(1.0 - std::log(0.9)).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(1.0 - std::log(0.1)).epsilon(1e-14));
    CHECK(out[0] == doctest::Approx(1.10536).epsilon(1e-5));
    CHECK(out[1] == doctest::Approx(3.30259).epsilon(1e-5));
}

TEST_CASE("debias state construction guards") {
    CHECK_THROWS_AS(DebiasState::uniform(3, 1.0, 0.5, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(DebiasState::uniform(3, 0.9, -0.1, 0.5), std::invalid_argument);
    const DebiasState state = DebiasState::uniform(4, 0.9, 0.5, 0.5);
    for (double v : state.p_hat) CHECK(v == 0.25);
}
