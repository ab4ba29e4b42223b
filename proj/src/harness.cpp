#include "dpl/harness.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpl/kernels.hpp"

namespace dpl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Dataset concat(const Dataset& labeled, const Dataset& unlabeled) {
    const std::size_t n = labeled.size() + unlabeled.size();
    Matrix feats(n, labeled.dim());
    std::vector<int> labels(n);
    std::vector<std::uint8_t> mask(n);
    std::vector<std::int64_t> counts(labeled.num_classes(), 0);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        auto src = labeled.features.row(i);
        std::copy(src.begin(), src.end(), feats.row(i).begin());
        labels[i] = labeled.label(i);
        mask[i] = labeled.labeled_mask[i];
        counts[static_cast<std::size_t>(labels[i])]++;
    }
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        auto src = unlabeled.features.row(i);
        std::copy(src.begin(), src.end(), feats.row(labeled.size() + i).begin());
        labels[labeled.size() + i] = unlabeled.label(i);
        mask[labeled.size() + i] = 0;
        counts[static_cast<std::size_t>(unlabeled.label(i))]++;
    }
    return Dataset(std::move(feats), std::move(labels), std::move(mask), std::move(counts));
}

Dataset keep_labeled_rows(const Dataset& ds) {
    const auto idx = ds.labeled_indices();
    Matrix feats(idx.size(), ds.dim());
    std::vector<int> labels(idx.size());
    std::vector<std::uint8_t> mask(idx.size(), 1);
    std::vector<std::int64_t> counts(ds.num_classes(), 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = ds.features.row(idx[i]);
        std::copy(src.begin(), src.end(), feats.row(i).begin());
        labels[i] = ds.label(idx[i]);
        counts[static_cast<std::size_t>(labels[i])]++;
    }
    return Dataset(std::move(feats), std::move(labels), std::move(mask), std::move(counts));
}

}  // namespace

BenchData build_ssl_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
    DatasetSpec spec = cfg.data;
    spec.seed = seed;
    Dataset test = sample_mixture(spec, {1.0, cfg.test_per_class}, 1);

    if (cfg.pool_mode == "single") {
        Dataset pool = sample_mixture(spec, cfg.pool, 0);
        Rng split_rng = Rng::stream(seed, rng_tag::split);
        return {split_labeled(pool, cfg.split, split_rng), std::move(test)};
    }

    // dual mode: the labeled budget comes out of the labeled pool, unselected
    // rows are dropped; the unlabeled set is its own independently shaped pool
    Dataset labeled_pool = sample_mixture(spec, cfg.labeled_pool, 0);
    Rng split_rng = Rng::stream(seed, rng_tag::split);
    Dataset selected = keep_labeled_rows(split_labeled(labeled_pool, cfg.split, split_rng));
    Dataset unlabeled_pool = sample_mixture(spec, cfg.unlabeled_pool, 3);
    return {concat(selected, unlabeled_pool), std::move(test)};
}

ZslData build_zsl_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
    DatasetSpec spec = cfg.data;
    spec.seed = seed;
    Dataset source = sample_mixture(spec, cfg.zsl_source, 2);
    std::fill(source.labeled_mask.begin(), source.labeled_mask.end(), std::uint8_t{1});
    Dataset target = sample_mixture(spec, {1.0, cfg.zsl_target_per_class}, 0);
    Dataset test = sample_mixture(spec, {1.0, cfg.test_per_class}, 1);
    return {std::move(source), std::move(target), std::move(test)};
}

TrainConfig train_config_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig out = cfg.train;
    out.seed = seed;
    return out;
}

TeacherConfig teacher_config_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    TeacherConfig out = cfg.teacher;
    out.seed = seed;
    return out;
}

SslRunOutput execute_ssl_run(const BenchData& bench, const TrainConfig& cfg) {
    const auto start = Clock::now();
    TrainResult result = train_run(bench.train, bench.test, cfg);
    const EvalScores scores = evaluate(result.ema, bench.test);
    return {std::move(result), scores, seconds_since(start)};
}

ZslRunOutput execute_zsl_run(const ZslData& data, const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto start = Clock::now();
    ZslRunOutput out{
        make_biased_teacher(data.source, data.target, teacher_config_for_seed(cfg, seed)),
        {},
        {},
        {},
        {},
        0.0,
    };
    out.teacher_scores = evaluate(out.teacher.params, data.test);
    const BootstrapResult boot = zsl_bootstrap(data.target, out.teacher, cfg.zsl);
    out.bootstrap_counts = boot.accepted_per_class;
    const TrainConfig tc = train_config_for_seed(cfg, seed);
    const Teacher* fallback = tc.clip_fallback ? &out.teacher : nullptr;
    out.result = train_run(boot.ds, data.test, tc, fallback, cfg.zsl.tau_clip);
    out.final_scores = evaluate(out.result.ema, data.test);
    out.wall_sec = seconds_since(start);
    return out;
}

void save_predictions_csv(const std::filesystem::path& path, const Matrix& probs,
                          const std::vector<int>& truth) {
    if (probs.rows != truth.size()) throw std::invalid_argument("save_predictions_csv: length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "index,truth";
    for (std::size_t j = 0; j < probs.cols; ++j) out << ",p_" << j;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < probs.rows; ++i) {
        out << i << "," << truth[i];
        for (double v : probs.row(i)) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

StoredPredictions load_predictions_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open predictions file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty predictions file: " + path.string());
    std::size_t cols = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) cols++;
    }
    if (cols < 3) throw std::runtime_error("predictions file needs index,truth,p_0...: " + path.string());
    const std::size_t classes = cols - 2;

    std::vector<double> values;
    std::vector<int> truth;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // index, unused
        if (!std::getline(ss, cell, ',')) throw std::runtime_error("predictions row missing truth");
        truth.push_back(std::stoi(cell));
        for (std::size_t j = 0; j < classes; ++j) {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error("predictions row too short");
            values.push_back(std::stod(cell));
        }
    }
    return {Matrix(truth.size(), classes, std::move(values)), std::move(truth)};
}

}  // namespace dpl
