#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "dpl/config.hpp"

using namespace dpl;

TEST_CASE("empty config carries the documented defaults") {
    const ExperimentConfig cfg = parse_config("");
    CHECK(cfg.train.lambda_debias == 0.5);
    CHECK(cfg.train.lambda_margin == 0.5);
    CHECK(cfg.train.tau == 0.95);
    CHECK(cfg.train.p_hat_momentum == 0.999);
    CHECK(cfg.train.mu == 7);
    CHECK(cfg.train.lambda_u == 1.0);
    CHECK(cfg.train.batch == 16);
    CHECK(cfg.train.sgd_momentum == 0.9);
    CHECK(cfg.train.weight_decay == 0.0005);
    CHECK(cfg.train.ema_decay == 0.999);
    CHECK(cfg.zsl.tau_clip == 0.95);
    CHECK(cfg.data.classes == 10);
    CHECK(cfg.data.dim == 8);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK_NOTHROW(validate_config(cfg));
}

TEST_CASE("constraint violations name the key and the constraint") {
    try {
        parse_config("train.tau = 1.5\n");
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("train.tau") != std::string::npos);
        CHECK(msg.find("(0,1]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("train.mu = 0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("debias.momentum = 1.0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("train.batch = -3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("train.lr = fast\n"), std::invalid_argument);
}

TEST_CASE("unknown keys are rejected with their path") {
    try {
        parse_config("train.warmup = 10\n");
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("train.warmup") != std::string::npos);
    }
}

TEST_CASE("parse, serialize, parse is the identity") {
    const std::string text =
        "data.classes = 6\n"
        "data.dim = 5\n"
        "# a comment line\n"
        "pool.gamma = 50\n"
        "train.method = fixmatch+la\n"
        "train.hidden = 32,16\n"
        "debias.lambda = 0.75\n"
        "seeds = 3,5,8\n"
        "zsl.translation = 1.5,0.5,0,0,0\n";
    const ExperimentConfig once = parse_config(text);
    const std::string canonical = serialize_config(once);
    const ExperimentConfig twice = parse_config(canonical);
    CHECK(serialize_config(twice) == canonical);
    CHECK(twice.data.classes == 6);
    CHECK(twice.train.method == Method::fixmatch_la);
    CHECK(twice.train.hidden == std::vector<std::size_t>{32, 16});
    CHECK(twice.train.lambda_debias == 0.75);
    CHECK(twice.train.lambda_margin == 0.75);
    CHECK(twice.seeds == std::vector<std::uint64_t>{3, 5, 8});
}

TEST_CASE("debias.lambda drives both coefficients, specific keys override") {
    const ExperimentConfig cfg = parse_config(
        "debias.lambda = 0.8\n"
        "debias.lambda_margin = 0.1\n");
    CHECK(cfg.train.lambda_debias == 0.8);
    CHECK(cfg.train.lambda_margin == 0.1);
}

TEST_CASE("overrides reuse the schema") {
    ExperimentConfig cfg = parse_config("");
    apply_override(cfg, "train.tau=0.8");
    CHECK(cfg.train.tau == 0.8);
    CHECK_THROWS_AS(apply_override(cfg, "train.tau=2.0"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "no.such.key=1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "not-an-assignment"), std::invalid_argument);
}

TEST_CASE("malformed lines carry the line number") {
    try {
        parse_config("data.classes = 4\nthis line has no equals\n");
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}
