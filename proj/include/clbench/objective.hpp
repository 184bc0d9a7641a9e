#ifndef CLBENCH_OBJECTIVE_HPP
#define CLBENCH_OBJECTIVE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/losses.hpp"
#include "clbench/matrix.hpp"
#include "clbench/nn.hpp"

namespace clbench {

// Frozen per-task inputs to the objective: the previous model, the
// accumulated importance weights and their anchor, and the class split.
// Class indices are head-column indices; columns [0, n_old) belong to
// previous tasks and [n_old, n_old + n_new) to the current one.
struct TaskContext {
    const TeacherSnapshot* teacher = nullptr;
    const ParameterImportance* importance = nullptr;
    const ParamTensors* anchor = nullptr;
    std::size_t n_old_classes = 0;
    std::size_t n_new_classes = 0;
};

// Counts of regularization-term evaluations, used to verify that disabled
// terms are never touched.
struct ObjectiveCounters {
    std::size_t kd = 0;
    std::size_t penalty = 0;
    std::size_t dis = 0;
    std::size_t mr = 0;

    std::size_t total() const { return kd + penalty + dis + mr; }
};

struct ObjectiveResult {
    double loss = 0.0;
    ParamTensors grads;
    std::size_t degenerate_features = 0;
};

inline Matrix slice_cols(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix out(m.rows, count);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, first + j);
    return out;
}

namespace detail {

// d(loss)/d(raw) from d(loss)/d(unit) through unit = raw / ||raw||.
inline void normalize_backward(std::span<const double> unit, double norm,
                               std::span<const double> unit_grad, std::span<double> raw_grad_out,
                               double scale) {
    const double proj = dot(unit, unit_grad);
    for (std::size_t j = 0; j < unit.size(); ++j)
        raw_grad_out[j] += scale * (unit_grad[j] - unit[j] * proj) / norm;
}

}  // namespace detail

// Assembles the configured method's total loss on one batch and its analytic
// gradient for every network parameter. On the first task (no teacher, no
// old classes) every method reduces to the identical plain cross-entropy
// path, so parameter trajectories coincide bit for bit.
inline ObjectiveResult evaluate_objective(const MlpNetwork& net, const Matrix& batch,
                                          std::span<const std::size_t> labels,
                                          const std::vector<bool>& is_memory,
                                          const LossConfig& cfg, const TaskContext& ctx,
                                          ObjectiveCounters* counters = nullptr) {
    if (labels.size() != batch.rows)
        throw ShapeError("evaluate_objective: labels/batch size mismatch");
    if (!is_memory.empty() && is_memory.size() != batch.rows)
        throw ShapeError("evaluate_objective: memory flags/batch size mismatch");

    const ForwardCache cache = forward(net, batch);
    const std::size_t n_classes = net.output_dim();
    const Matrix targets = one_hot(labels, n_classes);
    const std::size_t n_old = ctx.n_old_classes;
    const bool has_old = ctx.teacher != nullptr && n_old > 0;

    ObjectiveResult out;

    switch (cfg.method) {
        case Method::kCe:
            break;  // plain CE below

        case Method::kLwf: {
            if (!has_old) break;
            const ForwardCache teacher_cache = forward(ctx.teacher->net(), batch);
            const Matrix recorded = softmax_rows(teacher_cache.logits(), cfg.temperature);
            const LossResult kd = distillation_loss(
                recorded, slice_cols(cache.logits(), 0, n_old), cfg.temperature);
            if (counters) ++counters->kd;
            const LossResult ce = cross_entropy(cache.logits(), targets);
            const double weight = cfg.lambda * old_class_weight(n_old, n_classes);
            const LossResult combined = cross_distillation(ce, kd, weight);
            out.loss = combined.loss;
            out.grads = backward(net, cache, combined.logit_grad);
            return out;
        }

        case Method::kIlos: {
            if (!has_old) break;
            const ForwardCache teacher_cache = forward(ctx.teacher->net(), batch);
            const Matrix& teacher_logits = teacher_cache.logits();
            const Matrix adjusted = ilos_adjust_logits(cache.logits(), teacher_logits, cfg.beta);
            const LossResult ce_adj = cross_entropy(adjusted, targets);
            // chain rule through the blend: old columns scale by beta
            Matrix logit_grad = ce_adj.logit_grad;
            for (std::size_t i = 0; i < logit_grad.rows; ++i)
                for (std::size_t j = 0; j < n_old; ++j) logit_grad(i, j) *= cfg.beta;
            const Matrix recorded = softmax_rows(teacher_logits, cfg.temperature);
            const LossResult kd = distillation_loss(
                recorded, slice_cols(cache.logits(), 0, n_old), cfg.temperature);
            if (counters) ++counters->kd;
            const double lambda_o = old_class_weight(n_old, n_classes);
            out.loss = ce_adj.loss + lambda_o * kd.loss;
            for (std::size_t i = 0; i < logit_grad.rows; ++i)
                for (std::size_t j = 0; j < n_old; ++j)
                    logit_grad(i, j) += lambda_o * kd.logit_grad(i, j);
            out.grads = backward(net, cache, logit_grad);
            return out;
        }

        case Method::kEwc:
        case Method::kRwc:
        case Method::kMas: {
            const LossResult ce = cross_entropy(cache.logits(), targets);
            out.loss = ce.loss;
            out.grads = backward(net, cache, ce.logit_grad);
            if (ctx.importance != nullptr && ctx.anchor != nullptr) {
                const PenaltyResult pen =
                    importance_penalty(net, *ctx.anchor, ctx.importance->values, cfg.lambda);
                if (counters) ++counters->penalty;
                out.loss += pen.penalty;
                out.grads.add_scaled(pen.grads, 1.0);
            }
            return out;
        }

        case Method::kLucirDis:
        case Method::kLucirMr:
        case Method::kLucirDisMr: {
            const LossResult ce = cross_entropy(cache.logits(), targets);
            out.loss = ce.loss;
            if (!has_old) {
                out.grads = backward(net, cache, ce.logit_grad);
                return out;
            }
            Matrix logit_grad = ce.logit_grad;
            const double lambda = lucir_lambda(cfg.lambda_base, ctx.n_new_classes, n_old);
            const double inv_batch = 1.0 / static_cast<double>(batch.rows);

            if (method_uses_dis(cfg.method)) {
                // less-forget constraint on L2-normalized old-class logits
                const ForwardCache teacher_cache = forward(ctx.teacher->net(), batch);
                if (counters) ++counters->dis;
                for (std::size_t i = 0; i < batch.rows; ++i) {
                    const UnitVector t = l2_normalize(teacher_cache.logits().row(i));
                    std::vector<double> s_raw(n_old);
                    for (std::size_t j = 0; j < n_old; ++j) s_raw[j] = cache.logits()(i, j);
                    const UnitVector s = l2_normalize(s_raw);
                    if (t.degenerate || s.degenerate) {
                        ++out.degenerate_features;
                        continue;
                    }
                    out.loss += lambda * (1.0 - dot(t.values, s.values)) * inv_batch;
                    // d(1 - <t, s/||s||>)/ds = -(t - s_hat (s_hat . t)) / ||s||
                    std::vector<double> unit_grad(n_old);
                    for (std::size_t j = 0; j < n_old; ++j) unit_grad[j] = -t.values[j];
                    std::vector<double> raw_grad(n_old, 0.0);
                    detail::normalize_backward(s.values, s.norm, unit_grad, raw_grad,
                                               lambda * inv_batch);
                    for (std::size_t j = 0; j < n_old; ++j) logit_grad(i, j) += raw_grad[j];
                }
            }

            Matrix feature_grad;
            bool feature_grad_used = false;
            std::vector<std::pair<std::size_t, std::vector<double>>> head_row_grads;

            if (method_uses_mr(cfg.method) && !is_memory.empty()) {
                std::vector<std::size_t> memory_rows;
                for (std::size_t i = 0; i < batch.rows; ++i)
                    if (is_memory[i] && labels[i] < n_old) memory_rows.push_back(i);
                if (!memory_rows.empty()) {
                    if (counters) ++counters->mr;
                    const double inv_mem = 1.0 / static_cast<double>(memory_rows.size());
                    const LinearLayer& head = net.layers.back();
                    // unit class embeddings = normalized output-head rows
                    Matrix unit_emb(head.weights.rows, head.weights.cols);
                    std::vector<double> emb_norms(head.weights.rows, 0.0);
                    std::vector<bool> emb_degenerate(head.weights.rows, false);
                    for (std::size_t c = 0; c < head.weights.rows; ++c) {
                        const UnitVector e = l2_normalize(head.weights.row(c));
                        emb_norms[c] = e.norm;
                        emb_degenerate[c] = e.degenerate;
                        for (std::size_t j = 0; j < head.weights.cols; ++j)
                            unit_emb(c, j) = e.values[j];
                    }
                    std::vector<std::size_t> new_ids;
                    for (std::size_t c = n_old; c < n_classes; ++c) new_ids.push_back(c);

                    feature_grad = Matrix(cache.features().rows, cache.features().cols);
                    Matrix unit_emb_grad(unit_emb.rows, unit_emb.cols);
                    for (std::size_t r : memory_rows) {
                        const UnitVector f = l2_normalize(cache.features().row(r));
                        if (f.degenerate) {
                            ++out.degenerate_features;
                            continue;
                        }
                        const MrResult mr = lucir_mr(f.values, unit_emb, labels[r], new_ids,
                                                     cfg.top_k, cfg.margin);
                        out.loss += mr.loss * inv_mem;
                        detail::normalize_backward(f.values, f.norm, mr.unit_feature_grad,
                                                   feature_grad.row(r), inv_mem);
                        for (std::size_t i = 0; i < unit_emb_grad.data.size(); ++i)
                            unit_emb_grad.data[i] += mr.unit_embedding_grad.data[i] * inv_mem;
                    }
                    feature_grad_used = true;
                    for (std::size_t c = 0; c < unit_emb.rows; ++c) {
                        if (emb_degenerate[c]) continue;
                        std::vector<double> raw(head.weights.cols, 0.0);
                        detail::normalize_backward(unit_emb.row(c), emb_norms[c],
                                                   unit_emb_grad.row(c), raw, 1.0);
                        head_row_grads.emplace_back(c, std::move(raw));
                    }
                }
            }

            out.grads = backward(net, cache, logit_grad,
                                 feature_grad_used ? &feature_grad : nullptr);
            for (const auto& [c, raw] : head_row_grads)
                for (std::size_t j = 0; j < raw.size(); ++j)
                    out.grads.weights.back()(c, j) += raw[j];
            return out;
        }
    }

    const LossResult ce = cross_entropy(cache.logits(), targets);
    out.loss = ce.loss;
    out.grads = backward(net, cache, ce.logit_grad);
    return out;
}

}  // namespace clbench

#endif  // CLBENCH_OBJECTIVE_HPP
