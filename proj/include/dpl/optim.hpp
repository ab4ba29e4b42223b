#pragma once

#include "dpl/mlp.hpp"

namespace dpl {

// SGD with Nesterov momentum and decoupled weight decay:
//   p <- p - lr * wd * p
//   v <- momentum * v + g
//   p <- p - lr * (g + momentum * v)
struct OptimState {
    MlpParams velocity;      // shapes mirror the parameters
    double momentum = 0.9;
    double weight_decay = 0.0;
    double base_lr = 0.03;
};

OptimState make_optim_state(const MlpParams& params, double momentum, double weight_decay, double base_lr);

// One update in place. lr >= 0; throws std::runtime_error("diverged") on
// non-finite gradients.
void sgd_nesterov_step(MlpParams& params, const MlpGrads& grads, OptimState& opt, double lr);

// base * cos(7*pi*k / (16*K)), defined for 0 <= k <= K, K > 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double base);

struct EmaTeacher {
    MlpParams shadow;
    double decay = 0.999;
};

EmaTeacher make_ema_teacher(const MlpParams& student, double decay);

// theta_t <- decay * theta_t + (1 - decay) * theta_s
void ema_update(EmaTeacher& teacher, const MlpParams& student);

}  // namespace dpl
