#ifndef CLBENCH_ROTATION_HPP
#define CLBENCH_ROTATION_HPP

#include <cstddef>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/importance.hpp"
#include "clbench/matrix.hpp"
#include "clbench/nn.hpp"
#include "clbench/random.hpp"

namespace clbench {

// The orthogonal reparameterization currently carried by a network: per
// fully-connected layer an input rotation U1 and an output rotation U2
// (identity where none is set; the output head never rotates its outputs).
struct RotationContext {
    std::vector<Matrix> input_rotations;
    std::vector<Matrix> output_rotations;
};

inline RotationContext rotation_context(const MlpNetwork& net) {
    RotationContext ctx;
    for (const auto& layer : net.layers) {
        ctx.input_rotations.push_back(layer.has_input_rotation()
                                          ? layer.input_rotation
                                          : Matrix::identity(layer.in_features()));
        ctx.output_rotations.push_back(layer.has_output_rotation()
                                           ? layer.output_rotation
                                           : Matrix::identity(layer.out_features()));
    }
    return ctx;
}

// The incremental rotations applied by one rwc_rotate call, needed to carry
// anchors and accumulated importances into the new coordinates.
struct RwcRotation {
    std::vector<Matrix> delta_input;   // per layer, in x in
    std::vector<Matrix> delta_output;  // per layer, out x out (identity for the head)
    bool identity_fallback = false;    // set when an eigendecomposition failed
};

// Rotates the parameter space of every layer so that the diagonal Fisher
// approximation tightens, without altering the feed-forward response:
// U1 is the eigenbasis of the layer-input second moment E[x x^T] and U2 the
// eigenbasis of the output-delta second moment E[d d^T], both estimated on
// `inputs` with labels drawn from the model's own softmax. The layer then
// trains W' = U2^T W U1 behind fixed orthogonal pre/post maps. The head
// keeps its output coordinates (U2 = I) so logits stay class-aligned.
inline RwcRotation rwc_rotate(MlpNetwork& net, const Matrix& inputs, Rng& rng) {
    if (inputs.rows == 0) throw ShapeError("rwc_rotate: empty data");
    const ForwardCache cache = forward(net, inputs);
    const Matrix probs = softmax_rows(cache.logits());
    const std::vector<std::size_t> labels = sample_labels_from_softmax(cache.logits(), rng);

    Matrix logit_grad(probs.rows, probs.cols);
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t j = 0; j < probs.cols; ++j)
            logit_grad(i, j) = probs(i, j) - (labels[i] == j ? 1.0 : 0.0);
    const std::vector<Matrix> deltas = backward_layer_deltas(net, cache, logit_grad);

    const double inv_n = 1.0 / static_cast<double>(inputs.rows);
    RwcRotation rot;

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        LinearLayer& layer = net.layers[l];
        const bool is_head = (l + 1 == net.layers.size());

        Matrix cov_in = transposed_matmul(cache.layer_inputs[l], cache.layer_inputs[l]);
        for (double& v : cov_in.data) v *= inv_n;
        Matrix cov_out = transposed_matmul(deltas[l], deltas[l]);
        for (double& v : cov_out.data) v *= inv_n;

        Matrix u1, u2;
        try {
            u1 = jacobi_eigen(cov_in).vectors;
            u2 = is_head ? Matrix::identity(layer.out_features())
                         : jacobi_eigen(cov_out).vectors;
        } catch (const NumericError&) {
            u1 = Matrix::identity(layer.in_features());
            u2 = Matrix::identity(layer.out_features());
            rot.identity_fallback = true;
        }

        // W' = U2^T W U1, b' = U2^T b; compose onto any existing rotation.
        layer.weights = matmul(transposed_matmul(u2, layer.weights), u1);
        if (!is_head) {
            std::vector<double> new_bias(layer.bias.size(), 0.0);
            for (std::size_t i = 0; i < u2.rows; ++i)
                for (std::size_t j = 0; j < u2.cols; ++j) new_bias[j] += u2(i, j) * layer.bias[i];
            layer.bias = std::move(new_bias);
        }
        layer.input_rotation = layer.has_input_rotation() ? matmul(layer.input_rotation, u1)
                                                          : u1;
        if (!is_head)
            layer.output_rotation = layer.has_output_rotation()
                                        ? matmul(layer.output_rotation, u2)
                                        : u2;

        rot.delta_input.push_back(std::move(u1));
        rot.delta_output.push_back(std::move(u2));
    }
    return rot;
}

// Re-expresses anchor parameters exactly in the coordinates produced by a
// rwc_rotate call: W* <- U2^T W* U1, b* <- U2^T b*.
inline void rotate_anchor(ParamTensors& anchor, const RwcRotation& rot) {
    for (std::size_t l = 0; l < anchor.weights.size(); ++l) {
        const Matrix& u1 = rot.delta_input[l];
        const Matrix& u2 = rot.delta_output[l];
        anchor.weights[l] = matmul(transposed_matmul(u2, anchor.weights[l]), u1);
        std::vector<double> nb(anchor.biases[l].size(), 0.0);
        for (std::size_t i = 0; i < u2.rows; ++i)
            for (std::size_t j = 0; j < u2.cols; ++j) nb[j] += u2(i, j) * anchor.biases[l][i];
        anchor.biases[l] = std::move(nb);
    }
}

// Carries a diagonal importance into the new coordinates: the diagonal of
// the exactly-transformed matrix, F''_ij = sum_kl U2_ki^2 U1_lj^2 F'_kl.
// Nonnegativity is preserved.
inline void rotate_importance(ParamTensors& importance, const RwcRotation& rot) {
    for (std::size_t l = 0; l < importance.weights.size(); ++l) {
        Matrix u1_sq = rot.delta_input[l];
        for (double& v : u1_sq.data) v *= v;
        Matrix u2_sq = rot.delta_output[l];
        for (double& v : u2_sq.data) v *= v;
        importance.weights[l] = matmul(transposed_matmul(u2_sq, importance.weights[l]), u1_sq);
        std::vector<double> nf(importance.biases[l].size(), 0.0);
        for (std::size_t i = 0; i < u2_sq.rows; ++i)
            for (std::size_t j = 0; j < u2_sq.cols; ++j)
                nf[j] += u2_sq(i, j) * importance.biases[l][i];
        importance.biases[l] = std::move(nf);
    }
}

}  // namespace clbench

#endif  // CLBENCH_ROTATION_HPP
