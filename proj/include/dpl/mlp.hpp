#pragma once

#include <vector>

#include "dpl/matrix.hpp"
#include "dpl/rng.hpp"

namespace dpl {

// Fully connected classifier: rectifier hidden layers, linear output layer
// producing logits. Gradients are exact reverse-mode derivatives of the
// forward map; the finite-difference suite in the tests checks every entry.

struct Layer {
    Matrix weight;              // d_in x d_out
    std::vector<double> bias;   // d_out

    bool operator==(const Layer&) const = default;
};

struct MlpParams {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().weight.rows; }
    std::size_t output_dim() const { return layers.back().weight.cols; }
    bool all_finite() const;
    bool operator==(const MlpParams&) const = default;
};

// Gradients mirror the parameter layout.
using MlpGrads = MlpParams;

// dims = {d_in, h_1, ..., h_k, C}. Gaussian weights of scale 1/sqrt(d_in)
// per layer, zero biases, drawn from the given rng. With zero_output_layer
// the last weight matrix starts at zero, so a fresh classifier emits exactly
// uniform probabilities (the trainer relies on that for its threshold
// behavior at step 0).
MlpParams init_mlp(const std::vector<std::size_t>& dims, Rng& rng, bool zero_output_layer = false);

MlpParams zeros_like(const MlpParams& params);

// Activations kept for the backward pass. inputs[l] is the input matrix fed
// to layer l (post-rectifier for l > 0); logits is the final linear output.
struct ForwardCache {
    std::vector<Matrix> inputs;
    Matrix logits;
};

Matrix forward(const MlpParams& params, const Matrix& x);
Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache& cache);

// Activations of the last hidden layer (penultimate representation).
Matrix forward_hidden(const MlpParams& params, const Matrix& x);

// Gradients of the scalar loss whose derivative on the logits is
// `loss_grad_on_logits`. The overload without a cache re-runs the forward.
MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& loss_grad_on_logits);
MlpGrads backward(const MlpParams& params, const Matrix& x, const Matrix& loss_grad_on_logits);

// y += alpha * x over every parameter.
void axpy_params(MlpParams& y, const MlpParams& x, double alpha);

double max_abs_diff(const MlpParams& a, const MlpParams& b);

}  // namespace dpl
