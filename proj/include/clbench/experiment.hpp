#ifndef CLBENCH_EXPERIMENT_HPP
#define CLBENCH_EXPERIMENT_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "clbench/config.hpp"
#include "clbench/data.hpp"
#include "clbench/engine.hpp"
#include "clbench/error.hpp"
#include "clbench/metrics.hpp"

namespace clbench {

// ---------------------------------------------------------------------------
// Run planning
// ---------------------------------------------------------------------------

struct RunSpec {
    enum class Kind { kIncremental, kOffline };
    Kind kind = Kind::kIncremental;
    std::size_t order = 0;
    Method method = Method::kCe;
    std::size_t holdout = 0;

    bool operator==(const RunSpec&) const = default;
};

// Cross product (order x method x S) plus any sweep extras and the offline
// upper bound, in a deterministic order.
inline std::vector<RunSpec> plan_runs(const ExperimentConfig& cfg) {
    std::vector<std::pair<Method, std::size_t>> cells;
    auto add_cell = [&](Method m, std::size_t s) {
        const std::pair<Method, std::size_t> cell{m, s};
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    };
    for (Method m : cfg.methods)
        for (std::size_t s : cfg.holdout_sizes) add_cell(m, s);
    for (Method m : cfg.sweep_methods)
        for (std::size_t s : cfg.sweep_sizes) add_cell(m, s);

    std::vector<RunSpec> specs;
    for (std::size_t order = 0; order < cfg.orders; ++order) {
        for (const auto& [m, s] : cells)
            specs.push_back({RunSpec::Kind::kIncremental, order, m, s});
        if (cfg.include_offline)
            specs.push_back({RunSpec::Kind::kOffline, order, Method::kCe, 0});
    }
    return specs;
}

// ---------------------------------------------------------------------------
// Per-run execution
// ---------------------------------------------------------------------------

struct StepRow {
    std::size_t order = 0;
    std::size_t step = 0;
    std::string method;
    std::size_t holdout = 0;
    double overall_micro = 0.0;
    double overall_macro = 0.0;
    std::optional<double> base;
    std::optional<double> old_classes;
    std::optional<double> new_classes;
    std::optional<double> forgetting_score;
};

struct RunOutcome {
    RunSpec spec;
    bool ok = false;
    std::string error;
    std::vector<StepRow> steps;
};

namespace detail {

inline FeatureDataset subset_by_classes(const FeatureDataset& ds,
                                        std::span<const std::size_t> classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (std::find(classes.begin(), classes.end(), ds.labels[i]) != classes.end())
            idx.push_back(i);
    return ds.select(idx);
}

}  // namespace detail

// Runs one (order, method, S) protocol: train each task, evaluate on the
// seen-class test split, then update the replay memory.
inline RunOutcome execute_run(const RunSpec& spec, const ExperimentConfig& cfg,
                              const FeatureDataset& train, const FeatureDataset& test,
                              const TaskSequence& sequence) {
    RunOutcome outcome;
    outcome.spec = spec;
    try {
        if (spec.kind == RunSpec::Kind::kOffline) {
            IncrementalLearner learner = run_offline_upper_bound(
                train, cfg.net, cfg.loss_config_for(Method::kCe), cfg.training,
                derive_seed(cfg.seed, {0x52554eULL, spec.order}));
            const std::vector<std::size_t> preds = learner.predict(test.features);
            StepRow row;
            row.order = spec.order;
            row.step = 0;
            row.method = "offline";
            row.holdout = 0;
            row.overall_micro = micro_f1(preds, test.labels);
            row.overall_macro = macro_f1(preds, test.labels, test.class_count());
            outcome.steps.push_back(row);
            outcome.ok = true;
            return outcome;
        }

        // The learner seed depends only on (seed, order): every method and
        // holdout walks the identical first-task trajectory.
        IncrementalLearner learner(train.dim(), cfg.net, cfg.loss_config_for(spec.method),
                                   cfg.training, derive_seed(cfg.seed, {0x52554eULL, spec.order}));
        ReplayMemory memory(spec.holdout, train.class_count());
        Rng memory_rng(derive_seed(cfg.seed, {0x4d454dULL, spec.order, spec.holdout}));
        AccuracyMatrix accuracy;

        for (std::size_t k = 0; k < sequence.tasks.size(); ++k) {
            const std::vector<std::size_t>& task = sequence.tasks[k];
            const FeatureDataset task_train = detail::subset_by_classes(train, task);
            learner.train_task(task_train, task, memory);

            // evaluate on test samples of all classes seen so far
            const std::span<const std::size_t> seen = learner.seen_classes();
            const FeatureDataset seen_test = detail::subset_by_classes(test, seen);
            const std::vector<std::size_t> pred_ids = learner.predict(seen_test.features);
            std::vector<std::size_t> pred_cols(pred_ids.size()), label_cols(pred_ids.size());
            for (std::size_t i = 0; i < pred_ids.size(); ++i) {
                pred_cols[i] = learner.column_of(pred_ids[i]);
                label_cols[i] = learner.column_of(seen_test.labels[i]);
            }

            StepRow row;
            row.order = spec.order;
            row.step = k;
            row.method = method_name(spec.method);
            row.holdout = spec.holdout;
            row.overall_micro = micro_f1(pred_cols, label_cols);
            row.overall_macro = macro_f1(pred_cols, label_cols, seen.size());

            auto task_columns = [&](const std::vector<std::size_t>& classes) {
                std::vector<std::size_t> cols;
                for (std::size_t c : classes) cols.push_back(learner.column_of(c));
                return cols;
            };
            std::vector<std::size_t> old_cols;
            for (std::size_t j = 1; j < k; ++j)
                for (std::size_t c : sequence.tasks[j]) old_cols.push_back(learner.column_of(c));
            const SubsetScores scores =
                subset_scores(pred_cols, label_cols, task_columns(sequence.tasks[0]), old_cols,
                              task_columns(sequence.tasks[k]));
            row.base = scores.base;
            row.old_classes = scores.old_classes;
            row.new_classes = scores.new_classes;

            std::vector<double> per_task(k + 1, 0.0);
            for (std::size_t j = 0; j <= k; ++j) {
                const auto cols = task_columns(sequence.tasks[j]);
                const SubsetScores task_score =
                    subset_scores(pred_cols, label_cols, cols, {}, {});
                per_task[j] = task_score.base.value_or(0.0);
            }
            accuracy.push_step(per_task);
            if (k >= 1) row.forgetting_score = forgetting(accuracy, k);

            outcome.steps.push_back(row);

            // evaluate first, then update the memory
            memory.update(task_train, task, memory_rng);
        }
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
        outcome.steps.clear();
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string csv_optional(const std::optional<double>& v) {
    return v ? csv_double(*v) : std::string{};
}

inline std::optional<double> parse_optional(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    return std::stod(cell);
}

inline std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline constexpr const char* kMetricsHeader =
    "order,step,method,S,overall_micro,overall_macro,base,old,new,forgetting";

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<RunOutcome>& outcomes) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << kMetricsHeader << "\n";
    for (const RunOutcome& run : outcomes) {
        for (const StepRow& r : run.steps) {
            out << r.order << ',' << r.step << ',' << r.method << ',' << r.holdout << ','
                << detail::csv_double(r.overall_micro) << ','
                << detail::csv_double(r.overall_macro) << ',' << detail::csv_optional(r.base)
                << ',' << detail::csv_optional(r.old_classes) << ','
                << detail::csv_optional(r.new_classes) << ','
                << detail::csv_optional(r.forgetting_score) << "\n";
        }
    }
}

inline std::vector<StepRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) return {};
    std::vector<StepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::csv_fields(line);
        if (f.size() != 10) throw ParseError("metrics row has " + std::to_string(f.size()) +
                                             " fields, expected 10", rows.size() + 2);
        StepRow r;
        r.order = std::stoul(f[0]);
        r.step = std::stoul(f[1]);
        r.method = f[2];
        r.holdout = std::stoul(f[3]);
        r.overall_micro = std::stod(f[4]);
        r.overall_macro = std::stod(f[5]);
        r.base = detail::parse_optional(f[6]);
        r.old_classes = detail::parse_optional(f[7]);
        r.new_classes = detail::parse_optional(f[8]);
        r.forgetting_score = detail::parse_optional(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void write_runs_csv(const std::filesystem::path& path,
                           const std::vector<RunOutcome>& outcomes) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << "order,method,S,kind,status,error\n";
    for (const RunOutcome& run : outcomes) {
        std::string error = run.error;
        std::replace(error.begin(), error.end(), ',', ';');
        std::replace(error.begin(), error.end(), '\n', ' ');
        out << run.spec.order << ','
            << (run.spec.kind == RunSpec::Kind::kOffline ? "offline"
                                                         : method_name(run.spec.method))
            << ',' << run.spec.holdout << ','
            << (run.spec.kind == RunSpec::Kind::kOffline ? "offline" : "incremental") << ','
            << (run.ok ? "ok" : "failed") << ',' << error << "\n";
    }
}

// ---------------------------------------------------------------------------
// Aggregated reports
// ---------------------------------------------------------------------------

namespace detail {

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& values) {
    MeanStd ms;
    ms.n = values.size();
    if (values.empty()) return ms;
    for (double v : values) ms.mean += v;
    ms.mean /= static_cast<double>(values.size());
    for (double v : values) ms.stddev += (v - ms.mean) * (v - ms.mean);
    ms.stddev = std::sqrt(ms.stddev / static_cast<double>(values.size()));
    return ms;
}

// final-step rows per (method, S, order)
inline std::vector<StepRow> final_steps(const std::vector<StepRow>& rows) {
    std::map<std::tuple<std::string, std::size_t, std::size_t>, StepRow> last;
    for (const StepRow& r : rows) {
        auto key = std::make_tuple(r.method, r.holdout, r.order);
        auto it = last.find(key);
        if (it == last.end() || r.step > it->second.step) last[key] = r;
    }
    std::vector<StepRow> out;
    for (auto& [key, row] : last) out.push_back(row);
    return out;
}

inline std::vector<double> collect(const std::vector<StepRow>& rows, const std::string& method,
                                   std::size_t holdout, double StepRow::*field) {
    std::vector<double> out;
    for (const StepRow& r : rows)
        if (r.method == method && r.holdout == holdout) out.push_back(r.*field);
    return out;
}

}  // namespace detail

// Writes the aggregated tables for a results directory containing
// metrics.csv and config.cfg: the method comparison summary (CSV + Markdown),
// per-step forgetting curves, the base/old/new breakdown, the holdout sweep
// and the micro/macro divergence table.
inline void write_reports(const std::filesystem::path& dir) {
    const auto metrics_path = dir / "metrics.csv";
    std::vector<StepRow> rows;
    if (std::filesystem::exists(metrics_path)) rows = read_metrics_csv(metrics_path);

    if (rows.empty()) {
        std::ofstream md(dir / "summary.md");
        md << "# Results\n\nno runs\n";
        std::ofstream csv(dir / "summary.csv");
        csv << "method,wo_micro_mean,wo_micro_std,wo_macro_mean,wo_macro_std,w_micro_mean,"
               "w_micro_std,w_macro_mean,w_macro_std\n";
        return;
    }

    std::size_t replay_holdout = 6;
    if (std::filesystem::exists(dir / "config.cfg"))
        replay_holdout = ExperimentConfig::parse_file(dir / "config.cfg").replay_holdout;

    const std::vector<StepRow> finals = detail::final_steps(rows);

    std::vector<std::string> methods;  // first-appearance order, offline last
    for (const StepRow& r : rows)
        if (r.method != "offline" &&
            std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    std::sort(methods.begin(), methods.end());

    // ---- summary (fixed-holdout comparison, mean +/- std over orders) ----
    {
        std::ofstream csv(dir / "summary.csv");
        std::ofstream md(dir / "summary.md");
        csv << "method,wo_micro_mean,wo_micro_std,wo_macro_mean,wo_macro_std,w_micro_mean,"
               "w_micro_std,w_macro_mean,w_macro_std\n";
        md << "# Results\n\n";
        md << "Mean and standard deviation over task orders of the final-step scores.\n";
        md << "`wo.` = no replay (S=0); `w.` = replay with S=" << replay_holdout << ".\n\n";
        md << "| Method | wo. micro-F1 | wo. macro-F1 | w. micro-F1 | w. macro-F1 |\n";
        md << "|---|---|---|---|---|\n";
        auto cell = [](const detail::MeanStd& ms) {
            if (ms.n == 0) return std::string("-");
            return detail::csv_double(ms.mean) + " +/- " + detail::csv_double(ms.stddev);
        };
        for (const std::string& m : methods) {
            const auto wo_mi = detail::mean_std(detail::collect(finals, m, 0, &StepRow::overall_micro));
            const auto wo_ma = detail::mean_std(detail::collect(finals, m, 0, &StepRow::overall_macro));
            const auto w_mi = detail::mean_std(
                detail::collect(finals, m, replay_holdout, &StepRow::overall_micro));
            const auto w_ma = detail::mean_std(
                detail::collect(finals, m, replay_holdout, &StepRow::overall_macro));
            csv << m << ',' << detail::csv_double(wo_mi.mean) << ','
                << detail::csv_double(wo_mi.stddev) << ',' << detail::csv_double(wo_ma.mean)
                << ',' << detail::csv_double(wo_ma.stddev) << ','
                << detail::csv_double(w_mi.mean) << ',' << detail::csv_double(w_mi.stddev) << ','
                << detail::csv_double(w_ma.mean) << ',' << detail::csv_double(w_ma.stddev)
                << "\n";
            md << "| " << m << " | " << cell(wo_mi) << " | " << cell(wo_ma) << " | " << cell(w_mi)
               << " | " << cell(w_ma) << " |\n";
        }
        const auto off_mi = detail::mean_std(detail::collect(finals, "offline", 0, &StepRow::overall_micro));
        const auto off_ma = detail::mean_std(detail::collect(finals, "offline", 0, &StepRow::overall_macro));
        if (off_mi.n > 0) {
            csv << "offline," << detail::csv_double(off_mi.mean) << ','
                << detail::csv_double(off_mi.stddev) << ',' << detail::csv_double(off_ma.mean)
                << ',' << detail::csv_double(off_ma.stddev) << ",,,,\n";
            md << "| offline (upper bound) | " << cell(off_mi) << " | " << cell(off_ma)
               << " | - | - |\n";
        }
    }

    // ---- forgetting curves per method and holdout ----
    {
        std::ofstream out(dir / "forgetting.csv");
        out << "method,S,step,mean_forgetting\n";
        std::map<std::tuple<std::string, std::size_t, std::size_t>, std::vector<double>> cells;
        for (const StepRow& r : rows)
            if (r.forgetting_score)
                cells[{r.method, r.holdout, r.step}].push_back(*r.forgetting_score);
        for (const auto& [key, values] : cells)
            out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
                << detail::csv_double(detail::mean_std(values).mean) << "\n";
    }

    // ---- base/old/new breakdown per step ----
    {
        std::ofstream out(dir / "breakdown.csv");
        out << "method,S,step,mean_base,mean_old,mean_new,mean_overall\n";
        std::map<std::tuple<std::string, std::size_t, std::size_t>,
                 std::array<std::vector<double>, 4>>
            cells;
        for (const StepRow& r : rows) {
            if (r.method == "offline") continue;
            auto& cell = cells[{r.method, r.holdout, r.step}];
            if (r.base) cell[0].push_back(*r.base);
            if (r.old_classes) cell[1].push_back(*r.old_classes);
            if (r.new_classes) cell[2].push_back(*r.new_classes);
            cell[3].push_back(r.overall_micro);
        }
        auto mean_or_empty = [](const std::vector<double>& v) {
            return v.empty() ? std::string{} : detail::csv_double(detail::mean_std(v).mean);
        };
        for (const auto& [key, cell] : cells)
            out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
                << mean_or_empty(cell[0]) << ',' << mean_or_empty(cell[1]) << ','
                << mean_or_empty(cell[2]) << ',' << mean_or_empty(cell[3]) << "\n";
    }

    // ---- holdout sweep (final overall micro-F1 vs S) ----
    {
        std::ofstream out(dir / "holdout.csv");
        out << "method,S,mean_overall_micro,std_overall_micro\n";
        std::map<std::pair<std::string, std::size_t>, std::vector<double>> cells;
        for (const StepRow& r : finals)
            if (r.method != "offline" && r.holdout > 0)
                cells[{r.method, r.holdout}].push_back(r.overall_micro);
        for (const auto& [key, values] : cells) {
            const auto ms = detail::mean_std(values);
            out << key.first << ',' << key.second << ',' << detail::csv_double(ms.mean) << ','
                << detail::csv_double(ms.stddev) << "\n";
        }
    }

    // ---- micro/macro divergence in percent ----
    {
        std::ofstream out(dir / "divergence.csv");
        out << "method,without_replay,with_replay\n";
        for (const std::string& m : methods) {
            auto ratio = [&](std::size_t s) -> std::string {
                const auto mi = detail::mean_std(detail::collect(finals, m, s, &StepRow::overall_micro));
                const auto ma = detail::mean_std(detail::collect(finals, m, s, &StepRow::overall_macro));
                if (mi.n == 0) return "";
                const auto r = divergence_ratio(mi.mean, ma.mean);
                return r ? detail::csv_double(*r) : std::string{};
            };
            out << m << ',' << ratio(0) << ',' << ratio(replay_holdout) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

// Executes the full experiment plan on a bounded worker pool and writes
// metrics.csv, runs.csv, config.cfg plus the aggregated reports. Outputs are
// byte-identical across reruns of the same config.
class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    // 0 = all runs succeeded, 2 = at least one run failed
    int run() {
        prepare_data();
        const std::vector<RunSpec> specs = plan_runs(cfg_);
        std::vector<RunOutcome> outcomes(specs.size());

        std::size_t n_workers = cfg_.workers ? cfg_.workers
                                             : std::max(1u, std::thread::hardware_concurrency());
        n_workers = std::min<std::size_t>(n_workers, specs.size());

        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> done{0};
        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= specs.size()) break;
                outcomes[i] = execute_run(specs[i], cfg_, train_, test_,
                                          sequences_[specs[i].order]);
                const std::size_t finished = done.fetch_add(1) + 1;
                if (verbose_) {
                    std::lock_guard<std::mutex> lock(log_mutex_);
                    std::printf("[%zu/%zu] order %zu %s S=%zu %s\n", finished, specs.size(),
                                specs[i].order,
                                specs[i].kind == RunSpec::Kind::kOffline
                                    ? "offline"
                                    : method_name(specs[i].method),
                                specs[i].holdout, outcomes[i].ok ? "ok" : "FAILED");
                    std::fflush(stdout);
                }
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t + 1 < n_workers; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        const std::filesystem::path dir(cfg_.output_dir);
        std::filesystem::create_directories(dir);
        {
            std::ofstream cfg_out(dir / "config.cfg");
            cfg_out << cfg_.serialize();
        }
        write_metrics_csv(dir / "metrics.csv", outcomes);
        write_runs_csv(dir / "runs.csv", outcomes);
        write_reports(dir);

        for (const RunOutcome& o : outcomes)
            if (!o.ok) return 2;
        return 0;
    }

    void set_verbose(bool v) { verbose_ = v; }

    const FeatureDataset& train_split() const { return train_; }
    const FeatureDataset& test_split() const { return test_; }

private:
    void prepare_data() {
        FeatureDataset full;
        if (cfg_.data.source == DataConfig::Source::kCsv) {
            CsvSchema schema;
            schema.require_subject = cfg_.data.split_mode == SplitSpec::Mode::kBySubject;
            full = load_csv(cfg_.data.csv_path, schema);
        } else {
            full = synthetic_gaussians(cfg_.data.classes, cfg_.data.dim, cfg_.data.separation,
                                       cfg_.data.samples_per_class, cfg_.data.imbalance,
                                       cfg_.seed);
        }
        SplitSpec spec;
        spec.mode = cfg_.data.split_mode;
        spec.train_fraction = cfg_.data.train_fraction;
        spec.seed = derive_seed(cfg_.seed, {0x53504cULL});
        SplitResult split_result = split(full, spec);
        for (std::size_t c : split_result.classes_missing_from_train)
            std::fprintf(stderr, "warning: class '%s' has no training samples after the split\n",
                         full.class_names[c].c_str());
        train_ = std::move(split_result.train);
        test_ = std::move(split_result.test);
        if (cfg_.data.standardize) {
            const Standardizer scaler = Standardizer::fit(train_);
            scaler.apply(train_);
            scaler.apply(test_);
        }
        sequences_ = generate_task_sequences(train_.class_count(), cfg_.orders, cfg_.seed);
    }

    ExperimentConfig cfg_;
    FeatureDataset train_;
    FeatureDataset test_;
    std::vector<TaskSequence> sequences_;
    bool verbose_ = false;
    std::mutex log_mutex_;
};

}  // namespace clbench

#endif  // CLBENCH_EXPERIMENT_HPP
