// Command-line driver: runs configured experiments, rebuilds report tables,
// emits dataset statistics and generates synthetic feature CSVs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "clbench/config.hpp"
#include "clbench/data.hpp"
#include "clbench/experiment.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& output_override,
            std::size_t workers_override, bool quiet) {
    clbench::ExperimentConfig cfg = clbench::ExperimentConfig::parse_file(config_path);
    if (const char* env = std::getenv("CLBENCH_OUTPUT_DIR")) cfg.output_dir = env;
    if (!output_override.empty()) cfg.output_dir = output_override;
    if (workers_override > 0) cfg.workers = workers_override;

    clbench::ExperimentRunner runner(cfg);
    runner.set_verbose(!quiet);
    const int code = runner.run();
    if (!quiet)
        std::cout << "results written to " << cfg.output_dir
                  << (code == 0 ? "" : " (some runs failed, see runs.csv)") << "\n";
    return code;
}

int cmd_report(const std::string& dir) {
    clbench::write_reports(dir);
    std::cout << "reports written to " << dir << "\n";
    return 0;
}

int cmd_stats(const std::string& dataset_path, const std::string& prefix) {
    const clbench::FeatureDataset ds = clbench::load_csv(dataset_path);

    const std::filesystem::path counts_path = prefix + "_counts.csv";
    std::ofstream counts_out(counts_path);
    counts_out << "class,count\n";
    const std::vector<std::size_t> counts = clbench::class_counts(ds);
    for (std::size_t c = 0; c < counts.size(); ++c)
        counts_out << ds.class_names[c] << ',' << counts[c] << "\n";

    const std::filesystem::path corr_path = prefix + "_correlation.csv";
    std::ofstream corr_out(corr_path);
    const clbench::Matrix corr = clbench::class_correlation(ds);
    corr_out << "class";
    for (const auto& name : ds.class_names) corr_out << ',' << name;
    corr_out << "\n";
    corr_out.precision(10);
    for (std::size_t a = 0; a < corr.rows; ++a) {
        corr_out << ds.class_names[a];
        for (std::size_t b = 0; b < corr.cols; ++b) corr_out << ',' << corr(a, b);
        corr_out << "\n";
    }

    std::cout << "wrote " << counts_path.string() << " and " << corr_path.string() << "\n";
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_path) {
    const clbench::ExperimentConfig cfg = clbench::ExperimentConfig::parse_file(config_path);
    if (cfg.data.source != clbench::DataConfig::Source::kSynthetic)
        throw clbench::ConfigError("synth: the config's data.source must be synthetic");
    const clbench::FeatureDataset ds = clbench::synthetic_gaussians(
        cfg.data.classes, cfg.data.dim, cfg.data.separation, cfg.data.samples_per_class,
        cfg.data.imbalance, cfg.seed);
    clbench::save_csv(ds, out_path);
    std::cout << "wrote " << ds.size() << " samples (" << ds.class_count() << " classes, dim "
              << ds.dim() << ") to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task-incremental continual-learning benchmark for tabular sensor features"};
    app.require_subcommand(1);

    std::string run_config, run_output;
    std::size_t run_workers = 0;
    bool run_quiet = false;
    CLI::App* run_cmd = app.add_subcommand("run", "execute an experiment config");
    run_cmd->add_option("config", run_config, "experiment config file")->required();
    run_cmd->add_option("--output", run_output,
                        "output directory (overrides config and CLBENCH_OUTPUT_DIR)");
    run_cmd->add_option("--workers", run_workers, "worker thread count override");
    run_cmd->add_flag("--quiet", run_quiet, "suppress per-run progress lines");

    std::string report_dir;
    CLI::App* report_cmd = app.add_subcommand("report", "rebuild summaries for a results dir");
    report_cmd->add_option("dir", report_dir, "results directory with metrics.csv")->required();

    std::string stats_dataset, stats_prefix{"stats"};
    CLI::App* stats_cmd =
        app.add_subcommand("stats", "class distribution and correlation of a feature CSV");
    stats_cmd->add_option("dataset", stats_dataset, "feature CSV")->required();
    stats_cmd->add_option("--out-prefix", stats_prefix, "output file prefix");

    std::string synth_config, synth_out;
    CLI::App* synth_cmd = app.add_subcommand("synth", "emit a synthetic feature CSV");
    synth_cmd->add_option("config", synth_config, "config with a synthetic [data] section")
        ->required();
    synth_cmd->add_option("--out", synth_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_config, run_output, run_workers, run_quiet);
        if (report_cmd->parsed()) return cmd_report(report_dir);
        if (stats_cmd->parsed()) return cmd_stats(stats_dataset, stats_prefix);
        if (synth_cmd->parsed()) return cmd_synth(synth_config, synth_out);
    } catch (const clbench::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const clbench::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
