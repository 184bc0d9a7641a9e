#ifndef CLBENCH_IMPORTANCE_HPP
#define CLBENCH_IMPORTANCE_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/losses.hpp"
#include "clbench/matrix.hpp"
#include "clbench/nn.hpp"
#include "clbench/random.hpp"

namespace clbench {

// Draws one class per row from the row's softmax distribution: a single
// uniform draw walks the cumulative probabilities.
inline std::vector<std::size_t> sample_labels_from_softmax(const Matrix& logits, Rng& rng) {
    const Matrix probs = softmax_rows(logits);
    std::vector<std::size_t> labels(logits.rows, 0);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double u = rng.uniform();
        double cum = 0.0;
        std::size_t pick = logits.cols - 1;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            cum += probs(i, j);
            if (u < cum) {
                pick = j;
                break;
            }
        }
        labels[i] = pick;
    }
    return labels;
}

// Diagonal empirical Fisher information: mean over samples of the squared
// per-sample gradient of log p(y|x) with y drawn from the model's own
// softmax (one draw per sample).
inline ParameterImportance estimate_fisher(const MlpNetwork& net, const Matrix& inputs,
                                           Rng& rng) {
    if (inputs.rows == 0) throw ShapeError("estimate_fisher: empty data");
    const ForwardCache cache = forward(net, inputs);
    const Matrix probs = softmax_rows(cache.logits());
    const std::vector<std::size_t> labels = sample_labels_from_softmax(cache.logits(), rng);

    // Per-sample d(-log p(y|x))/d(logits) rows; sign is irrelevant after
    // squaring.
    Matrix logit_grad(probs.rows, probs.cols);
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t j = 0; j < probs.cols; ++j)
            logit_grad(i, j) = probs(i, j) - (labels[i] == j ? 1.0 : 0.0);

    const std::vector<Matrix> deltas = backward_layer_deltas(net, cache, logit_grad);
    const double inv_n = 1.0 / static_cast<double>(inputs.rows);

    ParameterImportance fisher;
    fisher.kind = ParameterImportance::Kind::kFisher;
    fisher.values = ParamTensors::zeros_like(net);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        // Per-sample weight gradient is outer(delta_i, x_i), so its square is
        // outer(delta_i^2, x_i^2); summing over samples is one matmul.
        Matrix delta_sq = deltas[l];
        for (double& v : delta_sq.data) v *= v;
        Matrix input_sq = cache.layer_inputs[l];
        for (double& v : input_sq.data) v *= v;
        fisher.values.weights[l] = transposed_matmul(delta_sq, input_sq);
        for (double& v : fisher.values.weights[l].data) v *= inv_n;
        for (std::size_t i = 0; i < delta_sq.rows; ++i)
            for (std::size_t j = 0; j < delta_sq.cols; ++j)
                fisher.values.biases[l][j] += delta_sq(i, j) * inv_n;
    }
    return fisher;
}

// Sensitivity-based importance: mean absolute gradient of the network output
// functional. The functional is the raw output for a single-output network
// and the squared L2 norm of the logit vector otherwise; labels are not
// needed.
inline ParameterImportance mas_importance(const MlpNetwork& net, const Matrix& inputs) {
    if (inputs.rows == 0) throw ShapeError("mas_importance: empty data");
    const ForwardCache cache = forward(net, inputs);
    const Matrix& logits = cache.logits();

    Matrix seed(logits.rows, logits.cols);
    if (logits.cols == 1) {
        for (double& v : seed.data) v = 1.0;
    } else {
        for (std::size_t i = 0; i < seed.data.size(); ++i) seed.data[i] = 2.0 * logits.data[i];
    }

    const std::vector<Matrix> deltas = backward_layer_deltas(net, cache, seed);
    const double inv_n = 1.0 / static_cast<double>(inputs.rows);

    ParameterImportance omega;
    omega.kind = ParameterImportance::Kind::kMas;
    omega.values = ParamTensors::zeros_like(net);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        // |outer(delta_i, x_i)| = outer(|delta_i|, |x_i|)
        Matrix delta_abs = deltas[l];
        for (double& v : delta_abs.data) v = std::abs(v);
        Matrix input_abs = cache.layer_inputs[l];
        for (double& v : input_abs.data) v = std::abs(v);
        omega.values.weights[l] = transposed_matmul(delta_abs, input_abs);
        for (double& v : omega.values.weights[l].data) v *= inv_n;
        for (std::size_t i = 0; i < delta_abs.rows; ++i)
            for (std::size_t j = 0; j < delta_abs.cols; ++j)
                omega.values.biases[l][j] += delta_abs(i, j) * inv_n;
    }
    return omega;
}

}  // namespace clbench

#endif  // CLBENCH_IMPORTANCE_HPP
