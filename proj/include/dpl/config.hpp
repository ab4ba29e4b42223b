#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpl/dataset.hpp"
#include "dpl/trainer.hpp"

namespace dpl {

// Flat, line-oriented key=value configuration with dotted sections. Every
// field has a default; unknown keys are rejected with the offending path.
// parse → serialize → parse is the identity.
struct ExperimentConfig {
    DatasetSpec data;                    // data.* (seed is filled per run)
    std::string pool_mode = "single";    // pool.mode: single | dual
    ImbalanceSpec pool{1.0, 500};        // pool.* (single mode)
    ImbalanceSpec labeled_pool{1.0, 250};     // labeled_pool.* (dual mode)
    ImbalanceSpec unlabeled_pool{1.0, 250};   // unlabeled_pool.* (dual mode)
    std::size_t test_per_class = 200;    // test.per_class

    LabelBudget split;                   // split.*
    TrainConfig train;                   // train.*, debias.*, da.*, la.*, aug.*

    ZslConfig zsl;                       // zsl.tau_clip
    TeacherConfig teacher;               // zsl.rotation, zsl.translation, zsl.teacher_*
    ImbalanceSpec zsl_source{20.0, 300}; // zsl.source_gamma / zsl.source_n_max
    std::size_t zsl_target_per_class = 200;

    std::string out_dir;                 // out.dir
    std::vector<std::uint64_t> seeds = {1};

    std::vector<double> sweep_lambdas = {0.0, 0.25, 0.5, 1.0};
    std::vector<std::string> sweep_methods = {"fixmatch", "debiaspl"};
    std::size_t sweep_jobs = 0;          // 0: one job per configuration, capped at hw threads
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical form: every key, sorted, doubles at 17 significant digits.
std::string serialize_config(const ExperimentConfig& cfg);

// `key=value` (the --override flag). Throws on unknown keys or bad values.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Cross-field checks; errors name the offending key and constraint.
void validate_config(const ExperimentConfig& cfg);

}  // namespace dpl
