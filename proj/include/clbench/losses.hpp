#ifndef CLBENCH_LOSSES_HPP
#define CLBENCH_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/matrix.hpp"
#include "clbench/nn.hpp"

namespace clbench {

enum class Method {
    kCe,
    kLwf,
    kEwc,
    kRwc,
    kMas,
    kLucirDis,
    kLucirMr,
    kLucirDisMr,
    kIlos,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::kCe: return "ce";
        case Method::kLwf: return "lwf";
        case Method::kEwc: return "ewc";
        case Method::kRwc: return "rwc";
        case Method::kMas: return "mas";
        case Method::kLucirDis: return "lucir_dis";
        case Method::kLucirMr: return "lucir_mr";
        case Method::kLucirDisMr: return "lucir_dis_mr";
        case Method::kIlos: return "ilos";
    }
    return "?";
}

inline std::optional<Method> method_from_string(const std::string& s) {
    static const std::pair<const char*, Method> table[] = {
        {"ce", Method::kCe},           {"lwf", Method::kLwf},
        {"ewc", Method::kEwc},         {"rwc", Method::kRwc},
        {"mas", Method::kMas},         {"lucir_dis", Method::kLucirDis},
        {"lucir_mr", Method::kLucirMr}, {"lucir_dis_mr", Method::kLucirDisMr},
        {"ilos", Method::kIlos},
    };
    for (const auto& [name, m] : table)
        if (s == name) return m;
    return std::nullopt;
}

inline bool method_uses_distillation(Method m) { return m == Method::kLwf || m == Method::kIlos; }
inline bool method_uses_importance(Method m) {
    return m == Method::kEwc || m == Method::kRwc || m == Method::kMas;
}
inline bool method_uses_dis(Method m) {
    return m == Method::kLucirDis || m == Method::kLucirDisMr;
}
inline bool method_uses_mr(Method m) { return m == Method::kLucirMr || m == Method::kLucirDisMr; }

// Per-method hyperparameters.
struct LossConfig {
    Method method = Method::kCe;
    double lambda = 1.0;       // LwF / EWC / RWC / MAS strength
    double lambda_base = 5.0;  // LUCIR base weight
    double margin = 0.5;       // LUCIR-MR hinge margin
    std::size_t top_k = 2;     // LUCIR-MR hard negatives
    double beta = 0.5;         // ILOS accommodation ratio
    double temperature = 2.0;  // distillation temperature

    void validate() const {
        if (lambda < 0.0 || lambda_base < 0.0 || margin < 0.0)
            throw ConfigError("loss config: lambda, lambda_base and margin must be >= 0");
        if (beta < 0.0 || beta > 1.0) throw ConfigError("loss config: beta must be in [0,1]");
        if (temperature <= 0.0) throw ConfigError("loss config: temperature must be > 0");
        if (top_k < 1) throw ConfigError("loss config: top_k must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Softmax / cross-entropy
// ---------------------------------------------------------------------------

inline constexpr double kLogEps = 1e-12;

// Row-wise temperature-scaled softmax with max-subtraction.
inline Matrix softmax_rows(const Matrix& logits, double temperature = 1.0) {
    Matrix probs(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double max_v = -1e300;
        for (std::size_t j = 0; j < logits.cols; ++j)
            max_v = std::max(max_v, logits(i, j) / temperature);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            const double e = std::exp(logits(i, j) / temperature - max_v);
            probs(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < logits.cols; ++j) probs(i, j) /= sum;
    }
    return probs;
}

inline Matrix one_hot(std::span<const std::size_t> labels, std::size_t n_classes) {
    Matrix t(labels.size(), n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes)
            throw ShapeError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        t(i, labels[i]) = 1.0;
    }
    return t;
}

struct LossResult {
    double loss = 0.0;
    Matrix logit_grad;  // batch-mean normalized
};

// Softmax cross-entropy against one-hot targets; loss and gradient are
// averaged over the batch.
inline LossResult cross_entropy(const Matrix& logits, const Matrix& one_hot_target) {
    if (!logits.same_shape(one_hot_target))
        throw ShapeError("cross_entropy: logits " + shape_string(logits) + " vs target " +
                         shape_string(one_hot_target));
    if (logits.rows == 0) throw ShapeError("cross_entropy: empty batch");
    const Matrix probs = softmax_rows(logits);
    const double inv_n = 1.0 / static_cast<double>(logits.rows);
    LossResult out;
    out.logit_grad = Matrix(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        for (std::size_t j = 0; j < logits.cols; ++j) {
            const double y = one_hot_target(i, j);
            if (y != 0.0) out.loss -= y * std::log(std::max(probs(i, j), kLogEps));
            out.logit_grad(i, j) = (probs(i, j) - y) * inv_n;
        }
    }
    out.loss *= inv_n;
    return out;
}

// Knowledge-distillation loss between the teacher's recorded
// temperature-scaled probabilities and the current old-class logits, both
// restricted to the old classes. Gradient is w.r.t. the current old logits.
inline LossResult distillation_loss(const Matrix& recorded_old_probs,
                                    const Matrix& current_old_logits, double temperature) {
    if (!recorded_old_probs.same_shape(current_old_logits))
        throw ShapeError("distillation_loss: recorded " + shape_string(recorded_old_probs) +
                         " vs current " + shape_string(current_old_logits));
    LossResult out;
    out.logit_grad = Matrix(current_old_logits.rows, current_old_logits.cols);
    if (current_old_logits.cols == 0 || current_old_logits.rows == 0) return out;  // no old classes
    const Matrix probs = softmax_rows(current_old_logits, temperature);
    const double inv_n = 1.0 / static_cast<double>(current_old_logits.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        for (std::size_t j = 0; j < probs.cols; ++j) {
            const double y = recorded_old_probs(i, j);
            if (y != 0.0) out.loss -= y * std::log(std::max(probs(i, j), kLogEps));
            out.logit_grad(i, j) = (probs(i, j) - y) * inv_n / temperature;
        }
    }
    out.loss *= inv_n;
    return out;
}

// Balance weight between old and new tasks: ratio of old classes to total
// observed classes.
inline double old_class_weight(std::size_t n_old, std::size_t n_seen) {
    if (n_seen == 0) return 0.0;
    return static_cast<double>(n_old) / static_cast<double>(n_seen);
}

// Cross-distillation combination: total = lambda_o * KD + CE. The KD gradient
// (over `n_old` leading logit columns) is folded into the full-width CE
// gradient.
inline LossResult cross_distillation(const LossResult& ce_full, const LossResult& kd_old,
                                     double lambda_o) {
    LossResult out;
    out.loss = ce_full.loss + lambda_o * kd_old.loss;
    out.logit_grad = ce_full.logit_grad;
    if (kd_old.logit_grad.cols > out.logit_grad.cols)
        throw ShapeError("cross_distillation: KD grad wider than CE grad");
    for (std::size_t i = 0; i < kd_old.logit_grad.rows; ++i)
        for (std::size_t j = 0; j < kd_old.logit_grad.cols; ++j)
            out.logit_grad(i, j) += lambda_o * kd_old.logit_grad(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Quadratic importance penalties (EWC / RWC / MAS)
// ---------------------------------------------------------------------------

// Per-parameter nonnegative importance weights, same shapes as the network
// parameters.
struct ParameterImportance {
    enum class Kind { kFisher, kMas };
    Kind kind = Kind::kFisher;
    ParamTensors values;
};

struct PenaltyResult {
    double penalty = 0.0;
    ParamTensors grads;
};

// (lambda/2) * sum_i importance_i * (theta_i - anchor_i)^2, with gradient
// lambda * importance * (theta - anchor). Shared by the Fisher- and
// sensitivity-based penalties.
inline PenaltyResult importance_penalty(const MlpNetwork& net, const ParamTensors& anchor,
                                        const ParamTensors& importance, double lambda) {
    PenaltyResult out;
    out.grads = ParamTensors::zeros_like(net);
    if (anchor.weights.size() != net.layers.size() ||
        importance.weights.size() != net.layers.size())
        throw ShapeError("importance_penalty: anchor/importance layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& w = net.layers[l].weights;
        if (!anchor.weights[l].same_shape(w) || !importance.weights[l].same_shape(w))
            throw ShapeError("importance_penalty: shape mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const double drift = w.data[i] - anchor.weights[l].data[i];
            const double imp = importance.weights[l].data[i];
            out.penalty += 0.5 * lambda * imp * drift * drift;
            out.grads.weights[l].data[i] = lambda * imp * drift;
        }
        for (std::size_t i = 0; i < net.layers[l].bias.size(); ++i) {
            const double drift = net.layers[l].bias[i] - anchor.biases[l][i];
            const double imp = importance.biases[l][i];
            out.penalty += 0.5 * lambda * imp * drift * drift;
            out.grads.biases[l][i] = lambda * imp * drift;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// LUCIR terms
// ---------------------------------------------------------------------------

// Less-forget constraint: mean over the batch of 1 - <f_old, f_new> on unit
// feature rows. Rows flagged degenerate (all-zero) contribute 0.
struct DisResult {
    double loss = 0.0;
    Matrix unit_feature_grad;  // w.r.t. the normalized new features
    std::size_t degenerate_count = 0;
};

inline DisResult lucir_dis(const Matrix& old_unit_features, const Matrix& new_unit_features) {
    if (!old_unit_features.same_shape(new_unit_features))
        throw ShapeError("lucir_dis: feature shape mismatch");
    DisResult out;
    out.unit_feature_grad = Matrix(new_unit_features.rows, new_unit_features.cols);
    if (new_unit_features.rows == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(new_unit_features.rows);
    for (std::size_t i = 0; i < new_unit_features.rows; ++i) {
        const auto old_row = old_unit_features.row(i);
        const auto new_row = new_unit_features.row(i);
        if (norm2(old_row) < 1e-12 || norm2(new_row) < 1e-12) {
            ++out.degenerate_count;
            continue;
        }
        out.loss += (1.0 - dot(old_row, new_row)) * inv_n;
        for (std::size_t j = 0; j < new_unit_features.cols; ++j)
            out.unit_feature_grad(i, j) = -old_row[j] * inv_n;
    }
    return out;
}

// Margin-ranking loss for one in-memory old-class sample: hinge sum over the
// K new classes most similar to the sample's unit feature. Ties in the top-K
// selection break toward the lower class index. Gradients are w.r.t. the
// unit feature and the unit class-embedding rows.
struct MrResult {
    double loss = 0.0;
    std::vector<double> unit_feature_grad;
    Matrix unit_embedding_grad;  // same shape as the embedding matrix
    std::size_t active_hinges = 0;
};

inline MrResult lucir_mr(std::span<const double> unit_feature, const Matrix& unit_embeddings,
                         std::size_t ground_truth_class,
                         std::span<const std::size_t> new_class_ids, std::size_t top_k,
                         double margin) {
    if (ground_truth_class >= unit_embeddings.rows)
        throw ShapeError("lucir_mr: ground-truth class out of range");
    if (unit_feature.size() != unit_embeddings.cols)
        throw ShapeError("lucir_mr: feature/embedding dimension mismatch");

    MrResult out;
    out.unit_feature_grad.assign(unit_feature.size(), 0.0);
    out.unit_embedding_grad = Matrix(unit_embeddings.rows, unit_embeddings.cols);

    std::vector<std::pair<double, std::size_t>> ranked;  // (similarity, class)
    ranked.reserve(new_class_ids.size());
    for (std::size_t c : new_class_ids)
        ranked.emplace_back(dot(unit_embeddings.row(c), unit_feature), c);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::size_t k_eff = std::min<std::size_t>(top_k, ranked.size());

    const double pos = dot(unit_embeddings.row(ground_truth_class), unit_feature);
    for (std::size_t k = 0; k < k_eff; ++k) {
        const auto [neg_sim, neg_class] = ranked[k];
        const double hinge = margin - pos + neg_sim;
        if (hinge <= 0.0) continue;
        out.loss += hinge;
        ++out.active_hinges;
        for (std::size_t j = 0; j < unit_feature.size(); ++j) {
            out.unit_feature_grad[j] +=
                unit_embeddings(neg_class, j) - unit_embeddings(ground_truth_class, j);
            out.unit_embedding_grad(ground_truth_class, j) -= unit_feature[j];
            out.unit_embedding_grad(neg_class, j) += unit_feature[j];
        }
    }
    return out;
}

// LUCIR adaptive weight lambda_base * sqrt(n_new / n_old); 0 when there are
// no old classes yet (first task: the term is disabled).
inline double lucir_lambda(double lambda_base, std::size_t n_new, std::size_t n_old) {
    if (n_old == 0) return 0.0;
    return lambda_base * std::sqrt(static_cast<double>(n_new) / static_cast<double>(n_old));
}

// ---------------------------------------------------------------------------
// ILOS logit accommodation
// ---------------------------------------------------------------------------

// Blends old-class logits between the current model (weight beta) and the
// previous model (weight 1-beta); new-class logits pass through untouched.
inline Matrix ilos_adjust_logits(const Matrix& logits, const Matrix& teacher_old_logits,
                                 double beta) {
    if (teacher_old_logits.rows != logits.rows)
        throw ShapeError("ilos_adjust_logits: batch size mismatch");
    if (teacher_old_logits.cols > logits.cols)
        throw ShapeError("ilos_adjust_logits: more teacher classes than current classes");
    Matrix adjusted = logits;
    for (std::size_t i = 0; i < logits.rows; ++i)
        for (std::size_t j = 0; j < teacher_old_logits.cols; ++j)
            adjusted(i, j) = beta * logits(i, j) + (1.0 - beta) * teacher_old_logits(i, j);
    return adjusted;
}

}  // namespace clbench

#endif  // CLBENCH_LOSSES_HPP
