#ifndef CLBENCH_NN_HPP
#define CLBENCH_NN_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/matrix.hpp"
#include "clbench/random.hpp"

namespace clbench {

enum class Activation { kRelu, kIdentity };

// One fully-connected layer: y = act(W x + b), weights stored out x in.
//
// A layer may additionally carry fixed orthogonal reparameterization maps
// U1 (input side) and U2 (output side). They are not trainable; with them
// the layer computes y = act(U2 (W (U1^T x) + b)). An empty matrix means
// identity. The output head never carries U2 so logit coordinates always
// stay class-aligned.
struct LinearLayer {
    Matrix weights;
    std::vector<double> bias;
    Activation activation = Activation::kRelu;
    Matrix input_rotation;   // U1, in x in; empty = identity
    Matrix output_rotation;  // U2, out x out; empty = identity

    std::size_t in_features() const { return weights.cols; }
    std::size_t out_features() const { return weights.rows; }
    bool has_input_rotation() const { return input_rotation.rows > 0; }
    bool has_output_rotation() const { return output_rotation.rows > 0; }
};

// Feed-forward classifier. The last layer is the output head (identity
// activation, one row per class seen so far); consecutive layer dimensions
// chain.
struct MlpNetwork {
    std::vector<LinearLayer> layers;

    std::size_t input_dim() const { return layers.front().in_features(); }
    std::size_t output_dim() const { return layers.back().out_features(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
        return n;
    }
};

// Gradient/importance/anchor carrier with the same shapes as the trainable
// parameters of a network.
struct ParamTensors {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    static ParamTensors zeros_like(const MlpNetwork& net) {
        ParamTensors p;
        for (const auto& l : net.layers) {
            p.weights.emplace_back(l.weights.rows, l.weights.cols);
            p.biases.emplace_back(l.bias.size(), 0.0);
        }
        return p;
    }

    static ParamTensors parameters_of(const MlpNetwork& net) {
        ParamTensors p;
        for (const auto& l : net.layers) {
            p.weights.push_back(l.weights);
            p.biases.push_back(l.bias);
        }
        return p;
    }

    void add_scaled(const ParamTensors& other, double scale) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].data.size(); ++i)
                weights[l].data[i] += scale * other.weights[l].data[i];
            for (std::size_t i = 0; i < biases[l].size(); ++i)
                biases[l][i] += scale * other.biases[l][i];
        }
    }

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.all_finite()) return false;
        for (const auto& b : biases)
            for (double v : b)
                if (!std::isfinite(v)) return false;
        return true;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += w.data.size();
        for (const auto& b : biases) n += b.size();
        return n;
    }
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization for weights and
// biases alike; the same scheme is used for fresh nets and appended head rows.
inline MlpNetwork make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden_sizes,
                           std::size_t output_dim, Rng& rng) {
    MlpNetwork net;
    std::size_t fan_in = input_dim;
    auto push_layer = [&](std::size_t out, Activation act) {
        LinearLayer layer;
        layer.weights = Matrix(out, fan_in);
        layer.bias.assign(out, 0.0);
        layer.activation = act;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
        for (double& b : layer.bias) b = rng.uniform(-bound, bound);
        net.layers.push_back(std::move(layer));
        fan_in = out;
    };
    for (std::size_t h : hidden_sizes) push_layer(h, Activation::kRelu);
    push_layer(output_dim, Activation::kIdentity);
    return net;
}

// All intermediates of one batched forward pass. layer_inputs[l] is what
// multiplies W_l (the input after U1, when present); pre_activations[l] is
// the value the nonlinearity sees.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> layer_inputs;
    std::vector<Matrix> pre_activations;
    std::vector<Matrix> post_activations;

    std::size_t batch_size() const { return input.rows; }

    // Accessors are lvalue-qualified: a cache must outlive the views it hands
    // out, so calling them on a temporary does not compile.
    const Matrix& logits() const& { return post_activations.back(); }
    const Matrix& logits() const&& = delete;

    // Penultimate-layer output (the feature vector feeding the head); for a
    // single-layer net this is the raw input.
    const Matrix& features() const& {
        return post_activations.size() >= 2 ? post_activations[post_activations.size() - 2]
                                            : input;
    }
    const Matrix& features() const&& = delete;
};

namespace detail {

inline Matrix affine_forward(const LinearLayer& layer, const Matrix& x_eff) {
    Matrix z = matmul_transposed(x_eff, layer.weights);  // n x out
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += layer.bias[j];
    return z;
}

}  // namespace detail

inline ForwardCache forward(const MlpNetwork& net, const Matrix& batch) {
    if (net.layers.empty()) throw ShapeError("forward: network has no layers");
    if (batch.cols != net.input_dim())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols) +
                         " features, network expects " + std::to_string(net.input_dim()));

    ForwardCache cache;
    cache.input = batch;
    const Matrix* current = &cache.input;
    for (const auto& layer : net.layers) {
        Matrix x_eff = layer.has_input_rotation() ? matmul(*current, layer.input_rotation)
                                                  : *current;
        Matrix pre = detail::affine_forward(layer, x_eff);
        if (layer.has_output_rotation()) pre = matmul_transposed(pre, layer.output_rotation);
        Matrix post = pre;
        if (layer.activation == Activation::kRelu)
            for (double& v : post.data) v = v > 0.0 ? v : 0.0;
        cache.layer_inputs.push_back(std::move(x_eff));
        cache.pre_activations.push_back(std::move(pre));
        cache.post_activations.push_back(std::move(post));
        current = &cache.post_activations.back();
    }
    return cache;
}

// Per-layer d(loss)/d(W x_eff + b). Because samples are independent in the
// forward pass, row i of each returned matrix is sample i's delta at that
// layer. `feature_grad`, when given, injects an extra d(loss)/d(features)
// term at the head's input (used by losses defined directly on features).
inline std::vector<Matrix> backward_layer_deltas(const MlpNetwork& net, const ForwardCache& cache,
                                                 const Matrix& logit_grad,
                                                 const Matrix* feature_grad = nullptr) {
    const std::size_t n_layers = net.layers.size();
    if (cache.pre_activations.size() != n_layers)
        throw ShapeError("backward: cache does not match network layer count");
    if (!logit_grad.same_shape(cache.logits()))
        throw ShapeError("backward: logit_grad shape " + shape_string(logit_grad) +
                         " != logits shape " + shape_string(cache.logits()));

    std::vector<Matrix> deltas(n_layers);
    Matrix grad_post = logit_grad;  // d loss / d post_activation of current layer

    for (std::size_t li = n_layers; li-- > 0;) {
        const LinearLayer& layer = net.layers[li];
        Matrix grad_pre = std::move(grad_post);
        if (layer.activation == Activation::kRelu) {
            const Matrix& pre = cache.pre_activations[li];
            for (std::size_t i = 0; i < grad_pre.data.size(); ++i)
                if (pre.data[i] <= 0.0) grad_pre.data[i] = 0.0;
        }
        // delta = d loss / d (W x_eff + b)
        deltas[li] = layer.has_output_rotation() ? matmul(grad_pre, layer.output_rotation)
                                                 : std::move(grad_pre);
        if (li > 0) {
            grad_post = matmul(deltas[li], layer.weights);  // d loss / d x_eff
            if (layer.has_input_rotation())
                grad_post = matmul_transposed(grad_post, layer.input_rotation);
            if (li == n_layers - 1 && feature_grad != nullptr) {
                if (!feature_grad->same_shape(grad_post))
                    throw ShapeError("backward: feature_grad shape mismatch");
                for (std::size_t i = 0; i < grad_post.data.size(); ++i)
                    grad_post.data[i] += feature_grad->data[i];
            }
        }
    }
    return deltas;
}

// Backpropagates d(loss)/d(logits) to gradients for every weight and bias.
inline ParamTensors backward(const MlpNetwork& net, const ForwardCache& cache,
                             const Matrix& logit_grad, const Matrix* feature_grad = nullptr) {
    const std::vector<Matrix> deltas = backward_layer_deltas(net, cache, logit_grad, feature_grad);
    ParamTensors grads = ParamTensors::zeros_like(net);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        grads.weights[li] = transposed_matmul(deltas[li], cache.layer_inputs[li]);
        for (std::size_t i = 0; i < deltas[li].rows; ++i)
            for (std::size_t j = 0; j < deltas[li].cols; ++j)
                grads.biases[li][j] += deltas[li](i, j);
    }
    return grads;
}

// Step-decay learning rate schedule: after advancing to epoch e the rate is
// multiplied by `factor` whenever e > effective_after and
// (e - effective_after) is a multiple of `step`.
struct LrScheduler {
    std::size_t effective_after = 0;
    std::size_t step = 0;  // 0 disables decay
    double factor = 1.0;
};

struct OptimizerState {
    double learning_rate = 0.01;
    double weight_decay = 0.0;
    LrScheduler scheduler;
    std::size_t epoch = 0;
};

// theta <- theta - lr * (grad + weight_decay * theta)
inline void sgd_step(MlpNetwork& net, const ParamTensors& grads, const OptimizerState& opt) {
    if (grads.weights.size() != net.layers.size())
        throw ShapeError("sgd_step: gradient layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        LinearLayer& layer = net.layers[l];
        const Matrix& gw = grads.weights[l];
        if (!gw.same_shape(layer.weights) || grads.biases[l].size() != layer.bias.size())
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < gw.data.size(); ++i) {
            if (!std::isfinite(gw.data[i]))
                throw NumericError("sgd_step: non-finite weight gradient at layer " +
                                   std::to_string(l) + ", index " + std::to_string(i));
            layer.weights.data[i] -=
                opt.learning_rate * (gw.data[i] + opt.weight_decay * layer.weights.data[i]);
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            if (!std::isfinite(grads.biases[l][i]))
                throw NumericError("sgd_step: non-finite bias gradient at layer " +
                                   std::to_string(l) + ", index " + std::to_string(i));
            layer.bias[i] -=
                opt.learning_rate * (grads.biases[l][i] + opt.weight_decay * layer.bias[i]);
        }
    }
}

inline void scheduler_step(OptimizerState& opt) {
    ++opt.epoch;
    const LrScheduler& s = opt.scheduler;
    if (s.step > 0 && opt.epoch > s.effective_after &&
        (opt.epoch - s.effective_after) % s.step == 0)
        opt.learning_rate *= s.factor;
}

// Appends `new_class_count` rows to the output head. Pre-existing rows are
// left bit-identical, so old-class logits are unchanged on any input.
inline void expand_head(MlpNetwork& net, std::size_t new_class_count, Rng& rng) {
    LinearLayer& head = net.layers.back();
    if (head.has_output_rotation())
        throw ShapeError("expand_head: output head must not carry an output rotation");
    if (new_class_count == 0) return;
    const std::size_t fan_in = head.in_features();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix grown(head.out_features() + new_class_count, fan_in);
    std::copy(head.weights.data.begin(), head.weights.data.end(), grown.data.begin());
    for (std::size_t i = head.weights.data.size(); i < grown.data.size(); ++i)
        grown.data[i] = rng.uniform(-bound, bound);
    head.weights = std::move(grown);
    for (std::size_t i = 0; i < new_class_count; ++i) head.bias.push_back(rng.uniform(-bound, bound));
}

// Grows a parameter carrier's head-layer tensors to match a net whose head
// was expanded after the carrier was recorded. Appended rows and bias slots
// are filled with `fill`: new parameters carry no anchor and no importance.
inline void pad_head_rows(ParamTensors& p, const MlpNetwork& net, double fill = 0.0) {
    const LinearLayer& head = net.layers.back();
    Matrix& w = p.weights.back();
    if (w.rows > head.out_features() || w.cols != head.in_features())
        throw ShapeError("pad_head_rows: carrier does not match network head");
    if (w.rows == head.out_features()) return;
    Matrix grown(head.out_features(), head.in_features(), fill);
    std::copy(w.data.begin(), w.data.end(), grown.data.begin());
    w = std::move(grown);
    p.biases.back().resize(head.out_features(), fill);
}

// Frozen deep copy of a network taken before an incremental task; provides
// the previous model's logits and features during the next one.
class TeacherSnapshot {
public:
    explicit TeacherSnapshot(const MlpNetwork& live) : net_(live) {}
    const MlpNetwork& net() const { return net_; }
    std::size_t output_dim() const { return net_.output_dim(); }

private:
    MlpNetwork net_;
};

inline TeacherSnapshot snapshot(const MlpNetwork& net) { return TeacherSnapshot(net); }

}  // namespace clbench

#endif  // CLBENCH_NN_HPP
