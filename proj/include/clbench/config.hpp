#ifndef CLBENCH_CONFIG_HPP
#define CLBENCH_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/engine.hpp"
#include "clbench/error.hpp"
#include "clbench/losses.hpp"

namespace clbench {

struct DataConfig {
    enum class Source { kSynthetic, kCsv };
    Source source = Source::kSynthetic;
    std::string csv_path;
    SplitSpec::Mode split_mode = SplitSpec::Mode::kStratified;
    double train_fraction = 0.7;
    bool standardize = true;
    // synthetic generator
    std::size_t classes = 8;
    std::size_t dim = 20;
    double separation = 3.0;
    std::size_t samples_per_class = 120;
    ImbalanceProfile imbalance;
};

// Per-method regularization strengths; the grid-searched defaults.
struct LossHyperparams {
    double lambda_lwf = 1.6;
    double lambda_ewc = 3.0;
    double lambda_rwc = 3.0;
    double lambda_mas = 0.25;
    double lambda_base = 5.0;
    double margin = 0.5;
    std::size_t top_k = 2;
    double beta = 0.5;
    double temperature = 2.0;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 7;
    std::size_t orders = 30;
    std::size_t workers = 0;  // 0 = all available cores
    std::string output_dir = "results";
    std::vector<Method> methods{Method::kCe,       Method::kLwf,        Method::kEwc,
                                Method::kRwc,      Method::kMas,        Method::kLucirDis,
                                Method::kLucirMr,  Method::kLucirDisMr, Method::kIlos};
    std::vector<std::size_t> holdout_sizes{0, 6};
    std::size_t replay_holdout = 6;  // S used for the with-replay summary columns
    std::vector<Method> sweep_methods;
    std::vector<std::size_t> sweep_sizes{2, 4, 6, 8, 10, 15};
    bool include_offline = true;

    DataConfig data;
    NetConfig net;
    TrainingSettings training;
    LossHyperparams loss;

    ExperimentConfig() {
        training.epochs = 200;
        training.batch_size = 15;
        training.optimizer.learning_rate = 0.01;
        training.optimizer.weight_decay = 1e-4;
        training.optimizer.scheduler = {50, 40, 0.01};
    }

    LossConfig loss_config_for(Method m) const {
        LossConfig cfg;
        cfg.method = m;
        switch (m) {
            case Method::kLwf: cfg.lambda = loss.lambda_lwf; break;
            case Method::kEwc: cfg.lambda = loss.lambda_ewc; break;
            case Method::kRwc: cfg.lambda = loss.lambda_rwc; break;
            case Method::kMas: cfg.lambda = loss.lambda_mas; break;
            default: cfg.lambda = 0.0; break;
        }
        cfg.lambda_base = loss.lambda_base;
        cfg.margin = loss.margin;
        cfg.top_k = loss.top_k;
        cfg.beta = loss.beta;
        cfg.temperature = loss.temperature;
        return cfg;
    }

    void validate() const {
        if (orders == 0) throw ConfigError("experiment.orders must be >= 1");
        if (methods.empty()) throw ConfigError("experiment.methods must not be empty");
        if (data.source == DataConfig::Source::kCsv && data.csv_path.empty())
            throw ConfigError("data.csv_path is required when data.source = csv");
        if (data.train_fraction <= 0.0 || data.train_fraction >= 1.0)
            throw ConfigError("data.train_fraction must be in (0,1)");
        if (training.epochs == 0 || training.batch_size == 0)
            throw ConfigError("optimizer.epochs and optimizer.batch_size must be >= 1");
        if (training.optimizer.learning_rate <= 0.0)
            throw ConfigError("optimizer.learning_rate must be > 0");
        if (training.optimizer.weight_decay < 0.0)
            throw ConfigError("optimizer.weight_decay must be >= 0");
        for (Method m : methods) loss_config_for(m).validate();
    }

    std::string serialize() const;
    static ExperimentConfig parse_string(const std::string& text);
    static ExperimentConfig parse_file(const std::filesystem::path& path);
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::string cur;
    for (char ch : value) {
        if (ch == ',') {
            items.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    const std::string last = trim(cur);
    if (!last.empty() || !items.empty()) items.push_back(last);
    for (const auto& it : items)
        if (it.empty()) throw ConfigError("empty element in list value '" + value + "'");
    return items;
}

inline double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    }
    if (pos != value.size())
        throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
    return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
    const double v = parse_double(key, value);
    if (v < 0.0 || v != std::floor(v))
        throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + value +
                          "'");
    return static_cast<std::uint64_t>(v);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + value + "'");
}

inline std::vector<Method> parse_methods(const std::string& key, const std::string& value) {
    std::vector<Method> methods;
    for (const std::string& item : split_list(value)) {
        auto m = method_from_string(item);
        if (!m) throw ConfigError("key '" + key + "': unknown method '" + item + "'");
        methods.push_back(*m);
    }
    return methods;
}

inline std::vector<std::size_t> parse_counts(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const std::string& item : split_list(value))
        out.push_back(static_cast<std::size_t>(parse_count(key, item)));
    return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section");
            section = line.substr(1, line.size() - 2);
            if (section != "experiment" && section != "data" && section != "net" &&
                section != "optimizer" && section != "loss")
                throw ConfigError("unknown section [" + section + "]");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        const std::string qkey = section + "." + key;

        if (section == "experiment") {
            if (key == "name") cfg.name = value;
            else if (key == "seed") cfg.seed = detail::parse_count(qkey, value);
            else if (key == "orders") cfg.orders = detail::parse_count(qkey, value);
            else if (key == "workers") cfg.workers = detail::parse_count(qkey, value);
            else if (key == "output_dir") cfg.output_dir = value;
            else if (key == "methods") cfg.methods = detail::parse_methods(qkey, value);
            else if (key == "holdout_sizes") cfg.holdout_sizes = detail::parse_counts(qkey, value);
            else if (key == "replay_holdout") cfg.replay_holdout = detail::parse_count(qkey, value);
            else if (key == "sweep_methods") cfg.sweep_methods = detail::parse_methods(qkey, value);
            else if (key == "sweep_sizes") cfg.sweep_sizes = detail::parse_counts(qkey, value);
            else if (key == "include_offline") cfg.include_offline = detail::parse_bool(qkey, value);
            else throw ConfigError("unknown key '" + qkey + "'");
        } else if (section == "data") {
            if (key == "source") {
                if (value == "synthetic") cfg.data.source = DataConfig::Source::kSynthetic;
                else if (value == "csv") cfg.data.source = DataConfig::Source::kCsv;
                else throw ConfigError("data.source must be synthetic or csv");
            } else if (key == "csv_path") cfg.data.csv_path = value;
            else if (key == "split") {
                if (value == "stratified") cfg.data.split_mode = SplitSpec::Mode::kStratified;
                else if (value == "by_subject") cfg.data.split_mode = SplitSpec::Mode::kBySubject;
                else throw ConfigError("data.split must be stratified or by_subject");
            } else if (key == "train_fraction") cfg.data.train_fraction = detail::parse_double(qkey, value);
            else if (key == "standardize") cfg.data.standardize = detail::parse_bool(qkey, value);
            else if (key == "classes") cfg.data.classes = detail::parse_count(qkey, value);
            else if (key == "dim") cfg.data.dim = detail::parse_count(qkey, value);
            else if (key == "separation") cfg.data.separation = detail::parse_double(qkey, value);
            else if (key == "samples_per_class") cfg.data.samples_per_class = detail::parse_count(qkey, value);
            else if (key == "imbalance") {
                if (value == "balanced") cfg.data.imbalance = ImbalanceProfile::balanced();
                else if (value.rfind("geometric:", 0) == 0)
                    cfg.data.imbalance =
                        ImbalanceProfile::geometric(detail::parse_double(qkey, value.substr(10)));
                else throw ConfigError("data.imbalance must be balanced or geometric:<ratio>");
            } else throw ConfigError("unknown key '" + qkey + "'");
        } else if (section == "net") {
            if (key == "hidden") cfg.net.hidden_sizes = detail::parse_counts(qkey, value);
            else throw ConfigError("unknown key '" + qkey + "'");
        } else if (section == "optimizer") {
            if (key == "learning_rate") cfg.training.optimizer.learning_rate = detail::parse_double(qkey, value);
            else if (key == "weight_decay") cfg.training.optimizer.weight_decay = detail::parse_double(qkey, value);
            else if (key == "epochs") cfg.training.epochs = detail::parse_count(qkey, value);
            else if (key == "batch_size") cfg.training.batch_size = detail::parse_count(qkey, value);
            else if (key == "scheduler_step") cfg.training.optimizer.scheduler.step = detail::parse_count(qkey, value);
            else if (key == "scheduler_effective_after") cfg.training.optimizer.scheduler.effective_after = detail::parse_count(qkey, value);
            else if (key == "scheduler_factor") cfg.training.optimizer.scheduler.factor = detail::parse_double(qkey, value);
            else throw ConfigError("unknown key '" + qkey + "'");
        } else if (section == "loss") {
            if (key == "lambda_lwf") cfg.loss.lambda_lwf = detail::parse_double(qkey, value);
            else if (key == "lambda_ewc") cfg.loss.lambda_ewc = detail::parse_double(qkey, value);
            else if (key == "lambda_rwc") cfg.loss.lambda_rwc = detail::parse_double(qkey, value);
            else if (key == "lambda_mas") cfg.loss.lambda_mas = detail::parse_double(qkey, value);
            else if (key == "lambda_base") cfg.loss.lambda_base = detail::parse_double(qkey, value);
            else if (key == "margin") cfg.loss.margin = detail::parse_double(qkey, value);
            else if (key == "top_k") cfg.loss.top_k = detail::parse_count(qkey, value);
            else if (key == "beta") cfg.loss.beta = detail::parse_double(qkey, value);
            else if (key == "temperature") cfg.loss.temperature = detail::parse_double(qkey, value);
            else throw ConfigError("unknown key '" + qkey + "'");
        }
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string join_counts(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::string join_methods(const std::vector<Method>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += method_name(v[i]);
    }
    return out;
}

}  // namespace detail

inline std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = " << name << "\n";
    out << "seed = " << seed << "\n";
    out << "orders = " << orders << "\n";
    out << "workers = " << workers << "\n";
    out << "output_dir = " << output_dir << "\n";
    out << "methods = " << detail::join_methods(methods) << "\n";
    out << "holdout_sizes = " << detail::join_counts(holdout_sizes) << "\n";
    out << "replay_holdout = " << replay_holdout << "\n";
    if (!sweep_methods.empty()) {
        out << "sweep_methods = " << detail::join_methods(sweep_methods) << "\n";
        out << "sweep_sizes = " << detail::join_counts(sweep_sizes) << "\n";
    }
    out << "include_offline = " << (include_offline ? "true" : "false") << "\n";

    out << "\n[data]\n";
    out << "source = " << (data.source == DataConfig::Source::kCsv ? "csv" : "synthetic") << "\n";
    if (data.source == DataConfig::Source::kCsv) out << "csv_path = " << data.csv_path << "\n";
    out << "split = "
        << (data.split_mode == SplitSpec::Mode::kBySubject ? "by_subject" : "stratified") << "\n";
    out << "train_fraction = " << detail::format_double(data.train_fraction) << "\n";
    out << "standardize = " << (data.standardize ? "true" : "false") << "\n";
    if (data.source == DataConfig::Source::kSynthetic) {
        out << "classes = " << data.classes << "\n";
        out << "dim = " << data.dim << "\n";
        out << "separation = " << detail::format_double(data.separation) << "\n";
        out << "samples_per_class = " << data.samples_per_class << "\n";
        if (data.imbalance.kind == ImbalanceProfile::Kind::kGeometric)
            out << "imbalance = geometric:" << detail::format_double(data.imbalance.ratio) << "\n";
        else
            out << "imbalance = balanced\n";
    }

    out << "\n[net]\n";
    out << "hidden = " << detail::join_counts(net.hidden_sizes) << "\n";

    out << "\n[optimizer]\n";
    out << "learning_rate = " << detail::format_double(training.optimizer.learning_rate) << "\n";
    out << "weight_decay = " << detail::format_double(training.optimizer.weight_decay) << "\n";
    out << "epochs = " << training.epochs << "\n";
    out << "batch_size = " << training.batch_size << "\n";
    out << "scheduler_step = " << training.optimizer.scheduler.step << "\n";
    out << "scheduler_effective_after = " << training.optimizer.scheduler.effective_after << "\n";
    out << "scheduler_factor = " << detail::format_double(training.optimizer.scheduler.factor)
        << "\n";

    out << "\n[loss]\n";
    out << "lambda_lwf = " << detail::format_double(loss.lambda_lwf) << "\n";
    out << "lambda_ewc = " << detail::format_double(loss.lambda_ewc) << "\n";
    out << "lambda_rwc = " << detail::format_double(loss.lambda_rwc) << "\n";
    out << "lambda_mas = " << detail::format_double(loss.lambda_mas) << "\n";
    out << "lambda_base = " << detail::format_double(loss.lambda_base) << "\n";
    out << "margin = " << detail::format_double(loss.margin) << "\n";
    out << "top_k = " << loss.top_k << "\n";
    out << "beta = " << detail::format_double(loss.beta) << "\n";
    out << "temperature = " << detail::format_double(loss.temperature) << "\n";
    return out.str();
}

}  // namespace clbench

#endif  // CLBENCH_CONFIG_HPP
