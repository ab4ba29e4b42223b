#include "dpl/debias.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dpl {

namespace {

// Floor at epsilon, renormalize only when needed, floor again so that both
// "entries >= 1e-9" and "sum within 1e-9 of 1" hold exactly as stated.
void floor_and_renormalize(std::vector<double>& p) {
    bool floored = false;
    double sum = 0.0;
    for (double& v : p) {
        if (!(v >= kPHatFloor)) {
            v = kPHatFloor;
            floored = true;
        }
        sum += v;
    }
    if (floored || std::fabs(sum - 1.0) > 1e-12) {
        const double inv = 1.0 / sum;
        for (double& v : p) {
            v *= inv;
            if (v < kPHatFloor) v = kPHatFloor;
        }
    }
}

void check_simplex_positive(const std::vector<double>& p, const char* what) {
    for (double v : p) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": entries must be strictly positive");
        }
    }
}

}  // namespace

DebiasState DebiasState::uniform(std::size_t classes, double m, double lambda_debias, double lambda_margin) {
    if (classes == 0) throw std::invalid_argument("DebiasState: need at least one class");
    if (m < 0.0 || m >= 1.0) throw std::invalid_argument("DebiasState: momentum must be in [0,1)");
    if (lambda_debias < 0.0 || lambda_margin < 0.0) {
        throw std::invalid_argument("DebiasState: lambdas must be >= 0");
    }
    DebiasState state;
    state.p_hat.assign(classes, 1.0 / static_cast<double>(classes));
    state.m = m;
    state.lambda_debias = lambda_debias;
    state.lambda_margin = lambda_margin;
    return state;
}

std::vector<double> debias_logits(const std::vector<double>& logits, const DebiasState& state) {
    if (logits.size() != state.p_hat.size()) throw std::invalid_argument("debias_logits: size mismatch");
    if (state.lambda_debias == 0.0) return logits;
    check_simplex_positive(state.p_hat, "debias_logits");
    std::vector<double> out(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = logits[j] - state.lambda_debias * std::log(state.p_hat[j]);
    }
    return out;
}

Matrix debias_logits_rows(const Matrix& logits, const DebiasState& state) {
    if (logits.cols != state.p_hat.size()) throw std::invalid_argument("debias_logits_rows: size mismatch");
    if (state.lambda_debias == 0.0) return logits;
    check_simplex_positive(state.p_hat, "debias_logits_rows");
    std::vector<double> shift(logits.cols);
    for (std::size_t j = 0; j < logits.cols; ++j) {
        shift[j] = -state.lambda_debias * std::log(state.p_hat[j]);
    }
    Matrix out = logits;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < out.cols; ++j) row[j] += shift[j];
    }
    return out;
}

void update_p_hat(DebiasState& state, const Matrix& batch_probs) {
    if (batch_probs.rows == 0) return;  // documented no-op
    if (batch_probs.cols != state.p_hat.size()) throw std::invalid_argument("update_p_hat: size mismatch");
    const double inv_rows = 1.0 / static_cast<double>(batch_probs.rows);
    std::vector<double> mean(batch_probs.cols, 0.0);
    for (std::size_t i = 0; i < batch_probs.rows; ++i) {
        auto row = batch_probs.row(i);
        for (std::size_t j = 0; j < batch_probs.cols; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
        state.p_hat[j] = state.m * state.p_hat[j] + (1.0 - state.m) * (mean[j] * inv_rows);
    }
    floor_and_renormalize(state.p_hat);
}

Margins adaptive_margins(const DebiasState& state) {
    Margins margins;
    margins.delta.resize(state.p_hat.size());
    if (state.lambda_margin == 0.0) return margins;  // delta already zero
    check_simplex_positive(state.p_hat, "adaptive_margins");
    for (std::size_t j = 0; j < state.p_hat.size(); ++j) {
        margins.delta[j] = state.lambda_margin * std::log(1.0 / state.p_hat[j]);
    }
    return margins;
}

std::pair<double, std::vector<double>> marginal_loss(const std::vector<double>& logits, int pseudo_label,
                                                     const Margins& margins) {
    const std::size_t classes = logits.size();
    if (margins.delta.size() != classes) throw std::invalid_argument("marginal_loss: margin size mismatch");
    if (pseudo_label < 0 || static_cast<std::size_t>(pseudo_label) >= classes) {
        throw std::invalid_argument("marginal_loss: label out of range");
    }
    std::vector<double> adjusted(classes);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < classes; ++j) {
        adjusted[j] = logits[j] - margins.delta[j];
        mx = std::max(mx, adjusted[j]);
    }
    double sum = 0.0;
    std::vector<double> grad(classes);
    for (std::size_t j = 0; j < classes; ++j) {
        grad[j] = std::exp(adjusted[j] - mx);
        sum += grad[j];
    }
    const double inv = 1.0 / sum;
    for (double& g : grad) g *= inv;
    const double loss = -(adjusted[static_cast<std::size_t>(pseudo_label)] - mx - std::log(sum));
    grad[static_cast<std::size_t>(pseudo_label)] -= 1.0;
    return {loss, std::move(grad)};
}

PseudoLabel pseudo_label(const std::vector<double>& probs, double tau) {
    if (probs.empty()) throw std::invalid_argument("pseudo_label: empty probability vector");
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.size(); ++j) {
        if (probs[j] > probs[best]) best = j;
    }
    return {static_cast<int>(best), probs[best] >= tau};
}

std::vector<double> distribution_alignment(const std::vector<double>& probs, const std::vector<double>& target,
                                           const std::vector<double>& p_hat) {
    if (probs.size() != target.size() || probs.size() != p_hat.size()) {
        throw std::invalid_argument("distribution_alignment: size mismatch");
    }
    std::vector<double> out(probs.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const double denom = std::max(p_hat[j], kPHatFloor);
        out[j] = probs[j] * target[j] / denom;
        sum += out[j];
    }
    const double inv = 1.0 / std::max(sum, kPHatFloor);
    for (double& v : out) v *= inv;
    return out;
}

std::vector<double> logit_adjust(const std::vector<double>& logits, const std::vector<double>& prior,
                                 double tau_la) {
    if (logits.size() != prior.size()) throw std::invalid_argument("logit_adjust: size mismatch");
    if (tau_la < 0.0) throw std::invalid_argument("logit_adjust: tau_la must be >= 0");
    check_simplex_positive(prior, "logit_adjust");
    std::vector<double> out(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = logits[j] - tau_la * std::log(prior[j]);
    }
    return out;
}

void save_p_hat_trajectory(const std::filesystem::path& path, const std::vector<std::vector<double>>& trajectory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open p_hat trajectory file: " + path.string());
    const std::size_t classes = trajectory.empty() ? 0 : trajectory.front().size();
    out << "step";
    for (std::size_t j = 0; j < classes; ++j) out << ",p_" << j;
    out << "\n";
    char buf[64];
    for (std::size_t step = 0; step < trajectory.size(); ++step) {
        out << step;
        for (double v : trajectory[step]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

}  // namespace dpl
