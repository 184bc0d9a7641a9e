#ifndef CLBENCH_METRICS_HPP
#define CLBENCH_METRICS_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "clbench/error.hpp"

namespace clbench {

namespace detail {

struct PooledCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline void check_prediction_inputs(std::span<const std::size_t> preds,
                                    std::span<const std::size_t> labels) {
    if (preds.size() != labels.size())
        throw ShapeError("f1: prediction/label length mismatch");
    if (preds.empty()) throw ShapeError("f1: empty input");
}

}  // namespace detail

// Micro-averaged F1 from pooled true/false positive and false negative
// counts. For single-label multiclass input this equals plain accuracy.
inline double micro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
    detail::check_prediction_inputs(preds, labels);
    detail::PooledCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) {
            ++c.tp;
        } else {
            ++c.fp;  // for the predicted class
            ++c.fn;  // for the true class
        }
    }
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

// Macro-averaged F1: unweighted mean of per-class F1 over classes
// [0, n_classes). A class with no true samples and no predictions scores 0.
inline double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                       std::size_t n_classes) {
    detail::check_prediction_inputs(preds, labels);
    if (n_classes == 0) throw ShapeError("macro_f1: n_classes must be >= 1");
    std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= n_classes || labels[i] >= n_classes)
            throw ShapeError("macro_f1: class id out of range");
        if (preds[i] == labels[i]) {
            ++tp[labels[i]];
        } else {
            ++fp[preds[i]];
            ++fn[labels[i]];
        }
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        if (denom > 0.0) sum += 2.0 * static_cast<double>(tp[c]) / denom;
    }
    return sum / static_cast<double>(n_classes);
}

// Stability/plasticity breakdown: micro-F1 restricted to test samples whose
// true label falls in each subset, with predictions taken over all seen
// classes. A subset with no samples is reported absent, not zero.
struct SubsetScores {
    std::optional<double> base;
    std::optional<double> old_classes;
    std::optional<double> new_classes;
    std::optional<double> overall;
};

namespace detail {

inline std::optional<double> filtered_micro_f1(std::span<const std::size_t> preds,
                                               std::span<const std::size_t> labels,
                                               std::span<const std::size_t> subset) {
    std::vector<std::size_t> p, l;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t c : subset) {
            if (labels[i] == c) {
                p.push_back(preds[i]);
                l.push_back(labels[i]);
                break;
            }
        }
    }
    if (l.empty()) return std::nullopt;
    return micro_f1(p, l);
}

}  // namespace detail

inline SubsetScores subset_scores(std::span<const std::size_t> preds,
                                  std::span<const std::size_t> labels,
                                  std::span<const std::size_t> base_classes,
                                  std::span<const std::size_t> old_classes,
                                  std::span<const std::size_t> new_classes) {
    detail::check_prediction_inputs(preds, labels);
    SubsetScores s;
    s.base = detail::filtered_micro_f1(preds, labels, base_classes);
    s.old_classes = detail::filtered_micro_f1(preds, labels, old_classes);
    s.new_classes = detail::filtered_micro_f1(preds, labels, new_classes);
    s.overall = micro_f1(preds, labels);
    return s;
}

// Lower-triangular accuracy history: entry(k, j) is the score on task j's
// test classes after training task k (0-based steps, j <= k).
class AccuracyMatrix {
public:
    void push_step(std::vector<double> per_task_scores) {
        if (per_task_scores.size() != rows_.size() + 1)
            throw ShapeError("AccuracyMatrix: step " + std::to_string(rows_.size()) +
                             " needs " + std::to_string(rows_.size() + 1) + " scores");
        rows_.push_back(std::move(per_task_scores));
    }

    std::size_t steps() const { return rows_.size(); }
    double entry(std::size_t k, std::size_t j) const { return rows_[k][j]; }

private:
    std::vector<std::vector<double>> rows_;
};

// Forgetting measure after step k (0-based, k >= 1): the mean over previous
// tasks of (maximum accuracy seen so far) - (current accuracy).
inline double forgetting(const AccuracyMatrix& acc, std::size_t k) {
    if (k < 1 || k >= acc.steps())
        throw ShapeError("forgetting: undefined for step " + std::to_string(k));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double best = 0.0;
        for (std::size_t i = j; i <= k; ++i) best = std::max(best, acc.entry(i, j));
        sum += best - acc.entry(k, j);
    }
    return sum / static_cast<double>(k);
}

// Relative micro/macro divergence in percent; absent when macro is zero.
inline std::optional<double> divergence_ratio(double micro, double macro) {
    if (macro <= 0.0) return std::nullopt;
    return 100.0 * micro / macro;
}

}  // namespace clbench

#endif  // CLBENCH_METRICS_HPP
