#include "dpl/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "dpl/kernels.hpp"

namespace dpl {

bool MlpParams::all_finite() const {
    for (const auto& layer : layers) {
        if (!layer.weight.all_finite()) return false;
        for (double b : layer.bias) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

MlpParams init_mlp(const std::vector<std::size_t>& dims, Rng& rng, bool zero_output_layer) {
    if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least input and output dims");
    MlpParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.weight = Matrix(dims[l], dims[l + 1]);
        if (!(zero_output_layer && l + 2 == dims.size())) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (double& w : layer.weight.data) w = scale * rng.next_gaussian();
        }
        layer.bias.assign(dims[l + 1], 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

MlpParams zeros_like(const MlpParams& params) {
    MlpParams out;
    for (const auto& layer : params.layers) {
        Layer z;
        z.weight = Matrix(layer.weight.rows, layer.weight.cols);
        z.bias.assign(layer.bias.size(), 0.0);
        out.layers.push_back(std::move(z));
    }
    return out;
}

Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache& cache) {
    if (x.cols != params.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
    cache.inputs.clear();
    cache.inputs.reserve(params.layers.size());
    Matrix h = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        if (h.cols != layer.weight.rows) throw std::invalid_argument("forward: layer dimension mismatch");
        cache.inputs.push_back(h);
        Matrix z = matmul(h, layer.weight);
        kernels::add_bias_rows(z.data.data(), layer.bias.data(), z.rows, z.cols);
        if (l + 1 < params.layers.size()) {
            kernels::relu(z.data.data(), z.size());
        }
        h = std::move(z);
    }
    cache.logits = h;
    return cache.logits;
}

Matrix forward(const MlpParams& params, const Matrix& x) {
    ForwardCache cache;
    return forward(params, x, cache);
}

Matrix forward_hidden(const MlpParams& params, const Matrix& x) {
    if (params.layers.size() < 2) throw std::invalid_argument("forward_hidden: no hidden layer");
    ForwardCache cache;
    forward(params, x, cache);
    return cache.inputs.back();
}

MlpGrads backward(const MlpParams& params, const ForwardCache& cache, const Matrix& loss_grad_on_logits) {
    if (loss_grad_on_logits.rows != cache.logits.rows || loss_grad_on_logits.cols != cache.logits.cols) {
        throw std::invalid_argument("backward: upstream gradient shape mismatch");
    }
    MlpGrads grads = zeros_like(params);
    Matrix g = loss_grad_on_logits;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Layer& layer = params.layers[l];
        const Matrix& input = cache.inputs[l];
        grads.layers[l].weight = matmul_tn(input, g);
        kernels::colsum(g.data.data(), grads.layers[l].bias.data(), g.rows, g.cols);
        if (l > 0) {
            g = matmul_nt(g, layer.weight);
            // rectifier gate: the stored input of layer l is the activation
            // of layer l-1
            kernels::relu_backward(g.data.data(), input.data.data(), g.size());
        }
    }
    return grads;
}

MlpGrads backward(const MlpParams& params, const Matrix& x, const Matrix& loss_grad_on_logits) {
    ForwardCache cache;
    forward(params, x, cache);
    return backward(params, cache, loss_grad_on_logits);
}

void axpy_params(MlpParams& y, const MlpParams& x, double alpha) {
    if (y.layers.size() != x.layers.size()) throw std::invalid_argument("axpy_params: layer count mismatch");
    for (std::size_t l = 0; l < y.layers.size(); ++l) {
        auto& yw = y.layers[l].weight.data;
        const auto& xw = x.layers[l].weight.data;
        if (yw.size() != xw.size()) throw std::invalid_argument("axpy_params: shape mismatch");
        for (std::size_t i = 0; i < yw.size(); ++i) yw[i] += alpha * xw[i];
        auto& yb = y.layers[l].bias;
        const auto& xb = x.layers[l].bias;
        for (std::size_t i = 0; i < yb.size(); ++i) yb[i] += alpha * xb[i];
    }
}

double max_abs_diff(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) throw std::invalid_argument("max_abs_diff: layer count mismatch");
    double worst = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        worst = std::max(worst, max_abs_diff(a.layers[l].weight, b.layers[l].weight));
        for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i) {
            worst = std::max(worst, std::fabs(a.layers[l].bias[i] - b.layers[l].bias[i]));
        }
    }
    return worst;
}

}  // namespace dpl
