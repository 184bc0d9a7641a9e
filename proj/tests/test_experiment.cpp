#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "clbench/experiment.hpp"

using namespace clbench;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// small but complete: all sections, two methods, two holdouts, offline
ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.name = "tiny";
    cfg.seed = 5;
    cfg.orders = 2;
    cfg.workers = 2;
    cfg.output_dir = out_dir;
    cfg.methods = {Method::kCe, Method::kIlos};
    cfg.holdout_sizes = {0, 6};
    cfg.replay_holdout = 6;
    cfg.include_offline = true;
    cfg.data.classes = 4;
    cfg.data.dim = 6;
    cfg.data.separation = 3.0;
    cfg.data.samples_per_class = 30;
    cfg.net.hidden_sizes = {10, 6};
    cfg.training.epochs = 12;
    cfg.training.batch_size = 10;
    cfg.training.optimizer.learning_rate = 0.05;
    cfg.training.optimizer.scheduler = {0, 0, 1.0};
    return cfg;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("defaults carry the published protocol settings") {
    const ExperimentConfig cfg;
    CHECK(cfg.orders == 30);
    CHECK(cfg.holdout_sizes == std::vector<std::size_t>{0, 6});
    CHECK(cfg.replay_holdout == 6);
    CHECK(cfg.sweep_sizes == std::vector<std::size_t>{2, 4, 6, 8, 10, 15});
    CHECK(cfg.methods.size() == 9);
    CHECK(cfg.training.epochs == 200);
    CHECK(cfg.training.batch_size == 15);
    CHECK(cfg.training.optimizer.learning_rate == 0.01);
    CHECK(cfg.training.optimizer.weight_decay == 1e-4);
    CHECK(cfg.training.optimizer.scheduler.effective_after == 50);
    CHECK(cfg.training.optimizer.scheduler.step == 40);
    CHECK(cfg.training.optimizer.scheduler.factor == 0.01);
    CHECK(cfg.net.hidden_sizes == std::vector<std::size_t>{32, 16, 16});
    CHECK(cfg.loss.lambda_lwf == 1.6);
    CHECK(cfg.loss.lambda_rwc == 3.0);
    CHECK(cfg.loss.lambda_mas == 0.25);
    CHECK(cfg.loss.lambda_base == 5.0);
    CHECK(cfg.loss.margin == 0.5);
    CHECK(cfg.loss.top_k == 2);
    CHECK(cfg.loss.temperature == 2.0);
}

TEST_CASE("config round-trips through serialize and parse") {
    ExperimentConfig cfg = tiny_config("somewhere");
    cfg.sweep_methods = {Method::kCe};
    cfg.sweep_sizes = {2, 4};
    cfg.data.imbalance = ImbalanceProfile::geometric(0.5);

    const std::string text = cfg.serialize();
    ExperimentConfig parsed = ExperimentConfig::parse_string(text);
    CHECK(parsed.serialize() == text);

    ExperimentConfig reparsed = ExperimentConfig::parse_string(parsed.serialize());
    CHECK(reparsed.serialize() == text);
}

TEST_CASE("config parsing applies values and rejects unknowns") {
    const std::string text =
        "[experiment]\n"
        "seed = 42\n"
        "orders = 3\n"
        "methods = ce, mas\n"
        "[data]\n"
        "classes = 5\n"
        "[net]\n"
        "hidden = 7, 3\n"
        "[optimizer]\n"
        "learning_rate = 0.5\n"
        "[loss]\n"
        "lambda_mas = 0.75\n";
    ExperimentConfig cfg = ExperimentConfig::parse_string(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.orders == 3);
    REQUIRE(cfg.methods.size() == 2);
    CHECK(cfg.methods[1] == Method::kMas);
    CHECK(cfg.data.classes == 5);
    CHECK(cfg.net.hidden_sizes == std::vector<std::size_t>{7, 3});
    CHECK(cfg.training.optimizer.learning_rate == 0.5);
    CHECK(cfg.loss.lambda_mas == 0.75);
    CHECK(cfg.loss_config_for(Method::kMas).lambda == 0.75);

    CHECK_THROWS_AS(ExperimentConfig::parse_string("[experiment]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("[bogus]\nseed = 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("[experiment]\nseed = x\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("[experiment]\nmethods = ce, nope\n"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("seed = 1\n"), ConfigError);
}

TEST_CASE("the plan covers the cross product exactly once") {
    ExperimentConfig cfg = tiny_config("x");
    cfg.sweep_methods = {Method::kCe};
    cfg.sweep_sizes = {6, 15};  // S=6 overlaps the main grid: no duplicate

    const std::vector<RunSpec> specs = plan_runs(cfg);
    // per order: 2 methods x 2 holdouts + 1 sweep extra (ce,15) + offline = 6
    CHECK(specs.size() == 2 * 6);
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j) CHECK(!(specs[i] == specs[j]));
}

TEST_CASE("runner writes deterministic outputs and every run appears once") {
    TempDir dir_a("clbench_run_a");
    TempDir dir_b("clbench_run_b");

    ExperimentConfig cfg_a = tiny_config(dir_a.path.string());
    ExperimentConfig cfg_b = tiny_config(dir_b.path.string());
    CHECK(ExperimentRunner(cfg_a).run() == 0);
    CHECK(ExperimentRunner(cfg_b).run() == 0);

    const std::string metrics_a = slurp(dir_a.path / "metrics.csv");
    const std::string metrics_b = slurp(dir_b.path / "metrics.csv");
    CHECK(!metrics_a.empty());
    CHECK(metrics_a == metrics_b);
    CHECK(slurp(dir_a.path / "summary.csv") == slurp(dir_b.path / "summary.csv"));

    // every planned run appears exactly once in runs.csv, all ok
    const std::string runs = slurp(dir_a.path / "runs.csv");
    std::size_t lines = 0;
    for (char c : runs)
        if (c == '\n') ++lines;
    CHECK(lines == 1 + plan_runs(cfg_a).size());
    CHECK(runs.find("failed") == std::string::npos);
}

TEST_CASE("a diverging run is recorded as a failure, not a crash") {
    TempDir dir("clbench_run_fail");
    ExperimentConfig cfg = tiny_config(dir.path.string());
    cfg.methods = {Method::kCe};
    cfg.holdout_sizes = {0};
    cfg.include_offline = false;
    cfg.training.optimizer.learning_rate = 1e6;  // guaranteed blow-up

    CHECK(ExperimentRunner(cfg).run() == 2);
    const std::string runs = slurp(dir.path / "runs.csv");
    CHECK(runs.find("failed") != std::string::npos);
}

TEST_CASE("summary aggregation matches a scripted recomputation") {
    TempDir dir("clbench_run_agg");
    ExperimentConfig cfg = tiny_config(dir.path.string());
    REQUIRE(ExperimentRunner(cfg).run() == 0);

    const std::vector<StepRow> rows = read_metrics_csv(dir.path / "metrics.csv");
    REQUIRE(!rows.empty());

    // recompute the without-replay mean final micro for "ce" from raw rows
    std::map<std::size_t, StepRow> finals;  // order -> last step
    for (const StepRow& r : rows) {
        if (r.method != "ce" || r.holdout != 0) continue;
        auto it = finals.find(r.order);
        if (it == finals.end() || r.step > it->second.step) finals[r.order] = r;
    }
    REQUIRE(finals.size() == cfg.orders);
    double mean = 0.0;
    for (const auto& [order, r] : finals) mean += r.overall_micro;
    mean /= double(finals.size());

    // find ce's wo_micro_mean in summary.csv
    std::ifstream in(dir.path / "summary.csv");
    std::string line;
    std::getline(in, line);  // header
    bool found = false;
    while (std::getline(in, line)) {
        if (line.rfind("ce,", 0) != 0) continue;
        const auto fields = detail::csv_fields(line);
        CHECK(std::stod(fields[1]) == Approx(mean).margin(1e-9));
        found = true;
    }
    CHECK(found);
}

TEST_CASE("a single order reports zero standard deviation") {
    TempDir dir("clbench_run_single");
    ExperimentConfig cfg = tiny_config(dir.path.string());
    cfg.orders = 1;
    cfg.methods = {Method::kCe};
    cfg.include_offline = false;
    REQUIRE(ExperimentRunner(cfg).run() == 0);

    std::ifstream in(dir.path / "summary.csv");
    std::string line;
    std::getline(in, line);  // header
    REQUIRE(std::getline(in, line));
    const auto fields = detail::csv_fields(line);
    CHECK(fields[0] == "ce");
    CHECK(std::stod(fields[2]) == 0.0);  // wo_micro_std
    CHECK(std::stod(fields[6]) == 0.0);  // w_micro_std
    CHECK_FALSE(std::getline(in, line));  // single row
}

TEST_CASE("reporting an empty directory yields an explicit no-runs summary") {
    TempDir dir("clbench_empty");
    write_reports(dir.path);
    const std::string md = slurp(dir.path / "summary.md");
    CHECK(md.find("no runs") != std::string::npos);
}

TEST_CASE("metrics csv round-trips including absent cells") {
    TempDir dir("clbench_csvrt");
    RunOutcome run;
    run.ok = true;
    StepRow a;
    a.order = 1;
    a.step = 0;
    a.method = "ce";
    a.holdout = 6;
    a.overall_micro = 0.5;
    a.overall_macro = 0.25;
    a.base = 0.75;  // old/new/forgetting absent
    StepRow b = a;
    b.step = 1;
    b.old_classes = 0.5;
    b.new_classes = 1.0;
    b.forgetting_score = 0.125;
    run.steps = {a, b};

    write_metrics_csv(dir.path / "metrics.csv", {run});
    const std::vector<StepRow> rows = read_metrics_csv(dir.path / "metrics.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].base == 0.75);
    CHECK_FALSE(rows[0].old_classes.has_value());
    CHECK_FALSE(rows[0].forgetting_score.has_value());
    CHECK(rows[1].forgetting_score == 0.125);
    CHECK(rows[1].new_classes == 1.0);
}

TEST_CASE("offline rows beat the final incremental rows on the tiny problem") {
    TempDir dir("clbench_run_off");
    ExperimentConfig cfg = tiny_config(dir.path.string());
    cfg.training.epochs = 30;
    REQUIRE(ExperimentRunner(cfg).run() == 0);
    const std::vector<StepRow> rows = read_metrics_csv(dir.path / "metrics.csv");

    double offline_mean = 0.0;
    std::size_t n_off = 0;
    double ce_replay_final = 0.0;
    std::size_t n_ce = 0;
    for (const StepRow& r : rows) {
        if (r.method == "offline") {
            offline_mean += r.overall_micro;
            ++n_off;
        }
        if (r.method == "ce" && r.holdout == 6 && r.step == 1) {
            ce_replay_final += r.overall_micro;
            ++n_ce;
        }
    }
    REQUIRE(n_off > 0);
    REQUIRE(n_ce > 0);
    CHECK(offline_mean / double(n_off) >= ce_replay_final / double(n_ce) - 0.02);
}
