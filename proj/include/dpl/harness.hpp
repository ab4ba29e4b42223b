#pragma once

#include <cstdint>
#include <filesystem>

#include "dpl/config.hpp"
#include "dpl/trainer.hpp"

namespace dpl {

// Experiment assembly shared by the CLI and the acceptance suite. Every
// dataset is a pure function of (config, seed); distinct roles draw from
// distinct sample streams of the same mixture so pools never share rows.
//   stream 0: training pool (labeled pool in dual mode)
//   stream 1: held-out test set
//   stream 2: domain-shift source for the biased teacher
//   stream 3: unlabeled pool in dual mode
struct BenchData {
    Dataset train;
    Dataset test;
};

BenchData build_ssl_benchmark(const ExperimentConfig& cfg, std::uint64_t seed);

struct ZslData {
    Dataset source;  // fully labeled, later shifted inside the teacher build
    Dataset target;  // balanced, unlabeled
    Dataset test;
};

ZslData build_zsl_benchmark(const ExperimentConfig& cfg, std::uint64_t seed);

TrainConfig train_config_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);
TeacherConfig teacher_config_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

struct SslRunOutput {
    TrainResult result;
    EvalScores final_scores;  // EMA model on the held-out set
    double wall_sec;
};

SslRunOutput execute_ssl_run(const BenchData& bench, const TrainConfig& cfg);

struct ZslRunOutput {
    Teacher teacher;
    EvalScores teacher_scores;
    std::vector<std::int64_t> bootstrap_counts;
    TrainResult result;
    EvalScores final_scores;
    double wall_sec;
};

ZslRunOutput execute_zsl_run(const ZslData& data, const ExperimentConfig& cfg, std::uint64_t seed);

// CSV `index,truth,p_0..p_{C-1}`; the stored-prediction format consumed by
// the analyze/report subcommand.
void save_predictions_csv(const std::filesystem::path& path, const Matrix& probs,
                          const std::vector<int>& truth);

struct StoredPredictions {
    Matrix probs;
    std::vector<int> truth;
};

StoredPredictions load_predictions_csv(const std::filesystem::path& path);

}  // namespace dpl
