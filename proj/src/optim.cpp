#include "dpl/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpl {

namespace {

void nesterov_span(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v,
                   double momentum, double weight_decay, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) throw std::runtime_error("diverged");
        if (weight_decay != 0.0) p[i] -= lr * weight_decay * p[i];
        v[i] = momentum * v[i] + g[i];
        p[i] -= lr * (g[i] + momentum * v[i]);
    }
}

}  // namespace

OptimState make_optim_state(const MlpParams& params, double momentum, double weight_decay, double base_lr) {
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
    if (base_lr <= 0.0) throw std::invalid_argument("base_lr must be > 0");
    return OptimState{zeros_like(params), momentum, weight_decay, base_lr};
}

void sgd_nesterov_step(MlpParams& params, const MlpGrads& grads, OptimState& opt, double lr) {
    if (lr < 0.0) throw std::invalid_argument("sgd_nesterov_step: lr must be >= 0");
    if (params.layers.size() != grads.layers.size()) {
        throw std::invalid_argument("sgd_nesterov_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        nesterov_span(params.layers[l].weight.data, grads.layers[l].weight.data,
                      opt.velocity.layers[l].weight.data, opt.momentum, opt.weight_decay, lr);
        nesterov_span(params.layers[l].bias, grads.layers[l].bias,
                      opt.velocity.layers[l].bias, opt.momentum, opt.weight_decay, lr);
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be > 0");
    if (step > total_steps) throw std::invalid_argument("cosine_lr: step exceeds total_steps");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base * std::cos(7.0 * std::numbers::pi * frac / 16.0);
}

EmaTeacher make_ema_teacher(const MlpParams& student, double decay) {
    if (decay < 0.0 || decay >= 1.0) throw std::invalid_argument("ema decay must be in [0,1)");
    return EmaTeacher{student, decay};
}

void ema_update(EmaTeacher& teacher, const MlpParams& student) {
    if (teacher.shadow.layers.size() != student.layers.size()) {
        throw std::invalid_argument("ema_update: layer count mismatch");
    }
    const double d = teacher.decay;
    for (std::size_t l = 0; l < student.layers.size(); ++l) {
        auto& tw = teacher.shadow.layers[l].weight.data;
        const auto& sw = student.layers[l].weight.data;
        if (tw.size() != sw.size()) throw std::invalid_argument("ema_update: shape mismatch");
        for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = d * tw[i] + (1.0 - d) * sw[i];
        auto& tb = teacher.shadow.layers[l].bias;
        const auto& sb = student.layers[l].bias;
        if (tb.size() != sb.size()) throw std::invalid_argument("ema_update: shape mismatch");
        for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = d * tb[i] + (1.0 - d) * sb[i];
    }
}

}  // namespace dpl
