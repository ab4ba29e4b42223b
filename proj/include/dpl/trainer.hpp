#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpl/dataset.hpp"
#include "dpl/debias.hpp"
#include "dpl/metrics.hpp"
#include "dpl/mlp.hpp"
#include "dpl/optim.hpp"

namespace dpl {

enum class Method { fixmatch, debiaspl, fixmatch_da, fixmatch_la };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct TrainConfig {
    Method method = Method::debiaspl;
    std::size_t batch = 16;         // B, labeled instances per step
    std::size_t mu = 7;             // unlabeled-to-labeled batch ratio
    double tau = 0.95;              // confidence threshold
    double lambda_u = 1.0;          // unsupervised loss weight
    std::size_t total_steps = 3000; // K
    double base_lr = 0.03;
    std::uint64_t seed = 1;
    std::size_t eval_every = 100;

    double lambda_debias = 0.5;
    double lambda_margin = 0.5;
    double p_hat_momentum = 0.999;  // m
    double tau_la = 1.0;            // logit-adjustment baseline strength
    bool da_uniform_target = false; // DA aims at uniform instead of the labeled marginal

    std::vector<std::size_t> hidden = {64, 64};
    double sgd_momentum = 0.9;
    double weight_decay = 0.0005;
    double ema_decay = 0.999;
    bool pseudo_from_ema = false;   // ablation: pseudo-label with the EMA model
    bool clip_fallback = false;     // rejected instances may take the frozen teacher's label
    Augmentor aug;
};

void validate(const TrainConfig& cfg);

struct ZslConfig {
    double tau_clip = 0.95;
};

// Raised when the loss goes non-finite; carries the failing step.
class DivergedError : public std::runtime_error {
public:
    explicit DivergedError(std::size_t step)
        : std::runtime_error("diverged at step " + std::to_string(step)), step(step) {}
    std::size_t step;
};

struct StepRecord {
    std::size_t step;
    double lr;
    double loss_s;
    double loss_u;
    double mask_rate;
    std::vector<std::int64_t> pseudo_hist;  // accepted pseudo-labels this step
};

struct EvalRecord {
    std::size_t step;        // last step of the window (1-based count of steps done)
    double lr;
    double loss_s;           // window means
    double loss_u;
    double mask_rate;
    double train_acc;        // EMA model on the labeled training rows
    double test_acc;         // EMA model on held-out data
    double balanced_test_acc;
    double imbalance;        // of the window's accepted pseudo-label histogram
    std::vector<std::int64_t> pseudo_hist;
};

struct RunMetrics {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    std::vector<std::vector<double>> p_hat_trajectory;  // p_hat after each step
};

struct RunState {
    MlpParams student;
    OptimState opt;
    EmaTeacher ema;
    DebiasState debias;
    std::size_t step = 0;
    RunMetrics metrics;
};

RunState make_run_state(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes);

struct LossResult {
    double loss;
    MlpGrads grads;
};

// Mean cross-entropy over the weakly augmented labeled batch.
LossResult supervised_loss(const MlpParams& params, const Matrix& x, const std::vector<int>& y);

struct UnsupResult {
    double loss;
    MlpGrads grads;
    double mask_rate;
    std::vector<std::int64_t> pseudo_hist;  // accepted pseudo-labels per class
    Matrix weak_probs;                      // debiased weak-view probabilities (feeds update_p_hat)
};

// The per-batch pipeline: debias the weak-view logits, softmax, threshold,
// then the marginal loss on the strong-view logits, masked and divided by
// the batch width. With lambda_debias = lambda_margin = 0 this is exactly
// the plain confidence-thresholded consistency loss.
UnsupResult unsupervised_loss(const MlpParams& params, const MlpParams& pseudo_params, const Matrix& weak,
                              const Matrix& strong, const DebiasState& state, const TrainConfig& cfg,
                              const std::vector<double>* da_target, const std::vector<double>* la_prior,
                              const Matrix* fallback_probs, double fallback_tau);

// One optimization step: combined loss, SGD update at the cosine rate, then
// the p_hat update, then the EMA update.
void train_step(RunState& rs, const Matrix& labeled_x, const std::vector<int>& labeled_y, const Matrix& weak,
                const Matrix& strong, const TrainConfig& cfg, const std::vector<double>* da_target = nullptr,
                const std::vector<double>* la_prior = nullptr, const Matrix* fallback_probs = nullptr,
                double fallback_tau = 1.0);

struct Teacher {
    MlpParams params;            // frozen
    double target_imbalance;     // measured at construction
};

struct TrainResult {
    MlpParams student;
    MlpParams ema;
    RunMetrics metrics;
};

// Full training loop: independent labeled/unlabeled loaders with per-pass
// reshuffling, evaluation of the EMA model every eval_every steps.
TrainResult train_run(const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& cfg,
                      const Teacher* fallback_teacher = nullptr, double fallback_tau = 1.0);

struct TeacherConfig {
    std::size_t steps = 1500;
    double base_lr = 0.03;
    std::vector<std::size_t> hidden = {64, 64};
    double rotation = 0.7;                  // radians, first two coordinates
    std::vector<double> translation = {2.0}; // broadcast across dims when size 1
    double min_imbalance = 2.0;             // construction check on the target
    std::uint64_t seed = 1;
    double sgd_momentum = 0.9;
    double weight_decay = 0.0005;
};

// Supervised model trained on a domain-shifted, class-imbalanced source.
// Construction fails unless its predictions on the (balanced) target are
// imbalanced (ratio > min_imbalance); a teacher that is not biased enough is
// a config error, not a usable stand-in.
Teacher make_biased_teacher(const Dataset& source, const Dataset& target, const TeacherConfig& cfg);

Matrix teacher_probs(const Teacher& teacher, const Matrix& features);

struct BootstrapResult {
    Dataset ds;                                  // accepted rows labeled by the teacher
    std::vector<std::int64_t> accepted_per_class;
};

// Instances whose teacher confidence exceeds tau_clip become "labeled" with
// the teacher's argmax; ground-truth target labels are never read here.
BootstrapResult zsl_bootstrap(const Dataset& target_ds, const Teacher& teacher, const ZslConfig& zcfg);
BootstrapResult zsl_bootstrap_from_probs(const Dataset& target_ds, const Matrix& probs, const ZslConfig& zcfg);

TrainResult zsl_run(const Dataset& target_ds, const Dataset& test_ds, const Teacher& teacher,
                    const ZslConfig& zcfg, const TrainConfig& cfg);

// Evaluation helpers (the only places ground truth of a dataset is read).
struct EvalScores {
    double acc;
    double balanced_acc;
};
EvalScores evaluate(const MlpParams& params, const Dataset& ds);

// Run directory: config.snapshot, metrics.csv, p_hat.csv,
// confusion_final.csv, summary.json, checkpoints/.
void save_run_outputs(const std::filesystem::path& dir, const std::string& config_snapshot,
                      const TrainConfig& cfg, const TrainResult& result, const Dataset& test_ds,
                      double wall_time_sec);

}  // namespace dpl
