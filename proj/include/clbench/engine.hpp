#ifndef CLBENCH_ENGINE_HPP
#define CLBENCH_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/error.hpp"
#include "clbench/importance.hpp"
#include "clbench/losses.hpp"
#include "clbench/matrix.hpp"
#include "clbench/nn.hpp"
#include "clbench/objective.hpp"
#include "clbench/random.hpp"
#include "clbench/rotation.hpp"

namespace clbench {

// ---------------------------------------------------------------------------
// Task sequences
// ---------------------------------------------------------------------------

// One ordering of the class set into incremental tasks of two classes each
// (the last task carries the leftover class when the count is odd).
struct TaskSequence {
    std::vector<std::vector<std::size_t>> tasks;
    std::size_t order_id = 0;
};

inline std::vector<TaskSequence> generate_task_sequences(std::size_t n_classes,
                                                         std::size_t n_orders,
                                                         std::uint64_t seed) {
    if (n_classes < 2) throw ConfigError("generate_task_sequences: need at least 2 classes");
    if (n_orders < 1) throw ConfigError("generate_task_sequences: need at least 1 order");
    std::vector<TaskSequence> orders;
    for (std::size_t o = 0; o < n_orders; ++o) {
        Rng rng(derive_seed(seed, {0x4f524445ULL, o}));  // "ORDE" stream
        std::vector<std::size_t> perm(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) perm[c] = c;
        rng.shuffle(perm);
        TaskSequence seq;
        seq.order_id = o;
        for (std::size_t i = 0; i < n_classes; i += 2) {
            std::vector<std::size_t> task{perm[i]};
            if (i + 1 < n_classes) task.push_back(perm[i + 1]);
            seq.tasks.push_back(std::move(task));
        }
        orders.push_back(std::move(seq));
    }
    return orders;
}

// ---------------------------------------------------------------------------
// Replay memory
// ---------------------------------------------------------------------------

// Class-balanced store of retained training samples. After each task every
// seen class holds floor(S * |C| / |C|_seen) uniformly retained samples (or
// all it has when fewer are available); existing holdings are down-sampled
// as the quota shrinks.
class ReplayMemory {
public:
    ReplayMemory(std::size_t budget_s, std::size_t total_classes)
        : budget_s_(budget_s), total_classes_(total_classes) {}

    std::size_t budget() const { return budget_s_; }
    std::size_t seen_classes() const { return store_.size(); }

    std::size_t quota() const {
        if (store_.empty()) return 0;
        return budget_s_ * total_classes_ / store_.size();
    }

    void update(const FeatureDataset& task_train, std::span<const std::size_t> task_classes,
                Rng& rng) {
        if (budget_s_ == 0) return;
        for (std::size_t c : task_classes) {
            auto& rows = store_[c];
            rows.clear();
            for (std::size_t i = 0; i < task_train.size(); ++i) {
                if (task_train.labels[i] != c) continue;
                rows.emplace_back(task_train.features.row(i).begin(),
                                  task_train.features.row(i).end());
            }
        }
        const std::size_t q = quota();
        for (auto& [cls, rows] : store_) {
            if (rows.size() <= q) continue;
            std::vector<std::size_t> keep(rows.size());
            for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
            rng.shuffle(keep);
            keep.resize(q);
            std::sort(keep.begin(), keep.end());
            std::vector<std::vector<double>> kept;
            kept.reserve(q);
            for (std::size_t i : keep) kept.push_back(std::move(rows[i]));
            rows = std::move(kept);
        }
    }

    std::map<std::size_t, std::size_t> per_class_counts() const {
        std::map<std::size_t, std::size_t> counts;
        for (const auto& [cls, rows] : store_) counts[cls] = rows.size();
        return counts;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [cls, rows] : store_) n += rows.size();
        return n;
    }

    template <typename Fn>  // fn(class_id, span<const double> features)
    void for_each_sample(Fn&& fn) const {
        for (const auto& [cls, rows] : store_)
            for (const auto& r : rows) fn(cls, std::span<const double>(r));
    }

private:
    std::size_t budget_s_;
    std::size_t total_classes_;
    std::map<std::size_t, std::vector<std::vector<double>>> store_;
};

// ---------------------------------------------------------------------------
// Incremental learner
// ---------------------------------------------------------------------------

struct NetConfig {
    std::vector<std::size_t> hidden_sizes{32, 16, 16};
};

struct TrainingSettings {
    std::size_t epochs = 200;
    std::size_t batch_size = 15;
    OptimizerState optimizer;  // template; epoch counter and rate reset per task
};

// Owns the model and the per-method lifecycle across tasks: head expansion,
// minibatch training with the configured loss, teacher snapshots and
// importance refreshes. One learner per (order, method, S) run.
class IncrementalLearner {
public:
    IncrementalLearner(std::size_t input_dim, const NetConfig& net_config,
                       const LossConfig& loss, const TrainingSettings& settings,
                       std::uint64_t seed)
        : loss_(loss), settings_(settings), rng_(derive_seed(seed, {0x4c4541524eULL})) {
        loss_.validate();
        net_ = make_mlp(input_dim, net_config.hidden_sizes, 0, rng_);
    }

    // Trains one task. `task_train` rows must already be standardized; labels
    // are dataset class ids, `task_classes` the ids new to this task.
    void train_task(const FeatureDataset& task_train, std::span<const std::size_t> task_classes,
                    const ReplayMemory& memory) {
        const std::size_t n_old = seen_classes_.size();
        const std::size_t n_new = task_classes.size();
        if (n_new == 0) throw ConfigError("train_task: task has no classes");

        expand_head(net_, n_new, rng_);
        for (std::size_t c : task_classes) seen_classes_.push_back(c);
        if (importance_) pad_head_rows(importance_->values, net_);
        if (anchor_) pad_head_rows(*anchor_, net_);

        // training set = new task data + replay memory, one loader
        std::vector<std::vector<double>> rows;
        std::vector<std::size_t> labels;  // head-column indices
        std::vector<bool> from_memory;
        for (std::size_t i = 0; i < task_train.size(); ++i) {
            rows.emplace_back(task_train.features.row(i).begin(),
                              task_train.features.row(i).end());
            labels.push_back(column_of(task_train.labels[i]));
            from_memory.push_back(false);
        }
        memory.for_each_sample([&](std::size_t cls, std::span<const double> feats) {
            rows.emplace_back(feats.begin(), feats.end());
            labels.push_back(column_of(cls));
            from_memory.push_back(true);
        });
        if (rows.empty()) throw ConfigError("train_task: no training samples");

        TaskContext ctx;
        ctx.teacher = teacher_ ? &*teacher_ : nullptr;
        ctx.importance = importance_ ? &*importance_ : nullptr;
        ctx.anchor = anchor_ ? &*anchor_ : nullptr;
        ctx.n_old_classes = n_old;
        ctx.n_new_classes = n_new;

        OptimizerState opt = settings_.optimizer;
        opt.epoch = 0;

        std::vector<std::size_t> order(rows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (std::size_t epoch = 0; epoch < settings_.epochs; ++epoch) {
            rng_.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += settings_.batch_size) {
                const std::size_t count = std::min(settings_.batch_size, order.size() - start);
                Matrix bx(count, net_.input_dim());
                std::vector<std::size_t> by(count);
                std::vector<bool> bmem(count);
                for (std::size_t r = 0; r < count; ++r) {
                    const std::size_t i = order[start + r];
                    std::copy(rows[i].begin(), rows[i].end(), bx.row(r).begin());
                    by[r] = labels[i];
                    bmem[r] = from_memory[i];
                }
                const ObjectiveResult res =
                    evaluate_objective(net_, bx, by, bmem, loss_, ctx, &counters_);
                if (!std::isfinite(res.loss))
                    throw NumericError("train_task: non-finite loss (method " +
                                       std::string(method_name(loss_.method)) + ", epoch " +
                                       std::to_string(epoch) + ")");
                last_loss_ = res.loss;
                sgd_step(net_, res.grads, opt);
            }
            scheduler_step(opt);
        }

        // snapshot first: the teacher is the model exactly as trained, before
        // any reparameterization the importance refresh may apply
        teacher_.emplace(net_);
        if (method_uses_importance(loss_.method)) refresh_importance(task_train, memory);
        ++tasks_trained_;
    }

    // Batched prediction; returns dataset class ids (argmax over the head,
    // ties toward the lower column).
    std::vector<std::size_t> predict(const Matrix& inputs) const {
        const ForwardCache cache = forward(net_, inputs);
        std::vector<std::size_t> out(inputs.rows);
        for (std::size_t i = 0; i < inputs.rows; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < cache.logits().cols; ++j)
                if (cache.logits()(i, j) > cache.logits()(i, best)) best = j;
            out[i] = seen_classes_[best];
        }
        return out;
    }

    std::size_t column_of(std::size_t class_id) const {
        for (std::size_t i = 0; i < seen_classes_.size(); ++i)
            if (seen_classes_[i] == class_id) return i;
        throw ConfigError("learner: class " + std::to_string(class_id) + " not seen yet");
    }

    const MlpNetwork& net() const { return net_; }
    std::span<const std::size_t> seen_classes() const { return seen_classes_; }
    const ObjectiveCounters& counters() const { return counters_; }
    const TeacherSnapshot* teacher() const { return teacher_ ? &*teacher_ : nullptr; }
    const ParameterImportance* importance() const { return importance_ ? &*importance_ : nullptr; }
    std::size_t tasks_trained() const { return tasks_trained_; }
    double last_loss() const { return last_loss_; }

private:
    void refresh_importance(const FeatureDataset& task_train, const ReplayMemory& memory) {
        // importance data = just-finished task plus memory, if present
        const std::size_t n_mem = memory.total_size();
        Matrix data(task_train.size() + n_mem, net_.input_dim());
        for (std::size_t i = 0; i < task_train.size(); ++i)
            std::copy(task_train.features.row(i).begin(), task_train.features.row(i).end(),
                      data.row(i).begin());
        std::size_t r = task_train.size();
        memory.for_each_sample([&](std::size_t /*cls*/, std::span<const double> feats) {
            std::copy(feats.begin(), feats.end(), data.row(r).begin());
            ++r;
        });

        if (loss_.method == Method::kRwc) {
            const RwcRotation rot = rwc_rotate(net_, data, rng_);
            if (importance_) rotate_importance(importance_->values, rot);
        }
        ParameterImportance fresh = (loss_.method == Method::kMas)
                                        ? mas_importance(net_, data)
                                        : estimate_fisher(net_, data, rng_);
        if (importance_) {
            importance_->values.add_scaled(fresh.values, 1.0);
        } else {
            importance_ = std::move(fresh);
        }
        anchor_ = ParamTensors::parameters_of(net_);
    }

    MlpNetwork net_;
    LossConfig loss_;
    TrainingSettings settings_;
    Rng rng_;
    std::vector<std::size_t> seen_classes_;  // head column -> dataset class id
    std::optional<TeacherSnapshot> teacher_;
    std::optional<ParameterImportance> importance_;
    std::optional<ParamTensors> anchor_;
    ObjectiveCounters counters_;
    std::size_t tasks_trained_ = 0;
    double last_loss_ = 0.0;
};

// Offline upper bound: one joint training pass over every class at once,
// built as a single-task incremental run so the evaluators are shared.
inline IncrementalLearner run_offline_upper_bound(const FeatureDataset& train,
                                                  const NetConfig& net_config,
                                                  const LossConfig& loss,
                                                  const TrainingSettings& settings,
                                                  std::uint64_t seed) {
    IncrementalLearner learner(train.dim(), net_config, loss, settings, seed);
    std::vector<std::size_t> all_classes(train.class_count());
    for (std::size_t c = 0; c < all_classes.size(); ++c) all_classes[c] = c;
    ReplayMemory empty(0, train.class_count());
    learner.train_task(train, all_classes, empty);
    return learner;
}

}  // namespace clbench

#endif  // CLBENCH_ENGINE_HPP
