#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "dpl/matrix.hpp"

namespace dpl {

// Debiased pseudo-labeling core: the counterfactual logit correction, the
// momentum-updated marginal estimate p_hat it feeds on, the adaptive margins
// derived from p_hat, and the marginal loss applied to strong-view logits.
// Distribution alignment and logit adjustment baselines live here too.

// p_hat entries are floored at this epsilon and renormalized before any log.
inline constexpr double kPHatFloor = 1e-9;

struct DebiasState {
    std::vector<double> p_hat;   // simplex, momentum-updated mean prediction
    double m = 0.999;            // momentum coefficient, [0,1)
    double lambda_debias = 0.5;  // scales the logit correction
    double lambda_margin = 0.5;  // scales the margins

    static DebiasState uniform(std::size_t classes, double m, double lambda_debias, double lambda_margin);
};

struct Margins {
    std::vector<double> delta;  // delta_j = lambda_margin * log(1 / p_hat_j)
};

// f - lambda_debias * log(p_hat), elementwise. lambda_debias == 0 returns the
// input unchanged (bitwise).
std::vector<double> debias_logits(const std::vector<double>& logits, const DebiasState& state);

// Batch variant: one row per instance.
Matrix debias_logits_rows(const Matrix& logits, const DebiasState& state);

// p_hat <- m * p_hat + (1-m) * mean_row(batch_probs), then floor/renormalize.
// Uses every row (no confidence mask); rows are the debiased probabilities of
// the weak views. An empty batch leaves the state untouched.
void update_p_hat(DebiasState& state, const Matrix& batch_probs);

Margins adaptive_margins(const DebiasState& state);

// loss = -log softmax(z - delta)[label]; gradient on z is
// softmax(z - delta) - onehot(label). Stable via max subtraction.
std::pair<double, std::vector<double>> marginal_loss(const std::vector<double>& logits, int pseudo_label,
                                                     const Margins& margins);

struct PseudoLabel {
    int label;      // argmax, ties to the smallest index
    bool accepted;  // max prob >= tau
};

PseudoLabel pseudo_label(const std::vector<double>& probs, double tau);

// Baseline: normalize(probs * target / p_hat); denominators floored at
// kPHatFloor.
std::vector<double> distribution_alignment(const std::vector<double>& probs, const std::vector<double>& target,
                                           const std::vector<double>& p_hat);

// Baseline: z - tau_la * log(prior). Prior must be strictly positive.
std::vector<double> logit_adjust(const std::vector<double>& logits, const std::vector<double>& prior,
                                 double tau_la);

// CSV `step,p_0..p_{C-1}` writer for p_hat trajectories.
void save_p_hat_trajectory(const std::filesystem::path& path, const std::vector<std::vector<double>>& trajectory);

}  // namespace dpl
