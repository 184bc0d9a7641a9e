#ifndef CLBENCH_DATA_HPP
#define CLBENCH_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clbench/error.hpp"
#include "clbench/matrix.hpp"
#include "clbench/random.hpp"

namespace clbench {

// Tabular feature dataset: one fixed-dimension feature vector per sample,
// integer class label (index into class_names) and optional subject id.
struct FeatureDataset {
    Matrix features;                      // n x d
    std::vector<std::size_t> labels;      // in [0, class_names.size())
    std::vector<std::string> class_names; // id -> display name
    std::vector<std::string> subjects;    // empty, or one entry per sample

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    std::size_t class_count() const { return class_names.size(); }
    bool has_subjects() const { return !subjects.empty(); }

    FeatureDataset select(std::span<const std::size_t> indices) const {
        FeatureDataset out;
        out.features = Matrix(indices.size(), dim());
        out.class_names = class_names;
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const std::size_t i = indices[r];
            for (std::size_t j = 0; j < dim(); ++j) out.features(r, j) = features(i, j);
            out.labels.push_back(labels[i]);
            if (has_subjects()) out.subjects.push_back(subjects[i]);
        }
        return out;
    }
};

// Expected CSV layout. Classes are discovered in order of first appearance
// unless pinned here, in which case unlisted labels are parse errors.
struct CsvSchema {
    std::optional<std::vector<std::string>> expected_classes;
    bool require_subject = false;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
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

inline double parse_feature(const std::string& s, std::size_t line, std::size_t column) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError("non-numeric feature value '" + s + "'", line, column);
    }
    if (pos != s.size()) throw ParseError("non-numeric feature value '" + s + "'", line, column);
    if (!std::isfinite(v)) throw ParseError("non-finite feature value '" + s + "'", line, column);
    return v;
}

}  // namespace detail

// Loads a dataset from a CSV with header `f0,...,f{d-1},label[,subject]`.
// Every malformed input yields a positioned ParseError.
inline FeatureDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path.string() + "'", 1);
    const std::vector<std::string> header = detail::split_line(line);

    std::size_t label_col = header.size();
    std::size_t subject_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "label") label_col = i;
        if (header[i] == "subject") subject_col = i;
    }
    if (label_col == header.size()) throw ParseError("header is missing the 'label' column", 1);
    if (schema.require_subject && subject_col == header.size())
        throw ParseError("header is missing the required 'subject' column", 1);

    std::vector<std::size_t> feature_cols;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (i != label_col && i != subject_col) feature_cols.push_back(i);
    if (feature_cols.empty()) throw ParseError("header has no feature columns", 1);

    FeatureDataset ds;
    std::map<std::string, std::size_t> class_ids;
    if (schema.expected_classes) {
        ds.class_names = *schema.expected_classes;
        for (std::size_t i = 0; i < ds.class_names.size(); ++i) class_ids[ds.class_names[i]] = i;
    }

    std::vector<double> values;
    std::vector<std::string> subjects;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_line(line);
        if (fields.size() != header.size())
            throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                                 std::to_string(header.size()),
                             line_no);
        for (std::size_t c : feature_cols)
            values.push_back(detail::parse_feature(fields[c], line_no, c + 1));
        const std::string& label = fields[label_col];
        auto it = class_ids.find(label);
        if (it == class_ids.end()) {
            if (schema.expected_classes)
                throw ParseError("unknown label '" + label + "'", line_no, label_col + 1);
            it = class_ids.emplace(label, ds.class_names.size()).first;
            ds.class_names.push_back(label);
        }
        ds.labels.push_back(it->second);
        if (subject_col != header.size()) subjects.push_back(fields[subject_col]);
    }

    ds.features = Matrix(ds.labels.size(), feature_cols.size());
    ds.features.data = std::move(values);
    if (subject_col != header.size()) ds.subjects = std::move(subjects);
    return ds;
}

inline void save_csv(const FeatureDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'", 0);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
    out << "label";
    if (ds.has_subjects()) out << ",subject";
    out << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out << ds.features(i, j) << ",";
        out << ds.class_names[ds.labels[i]];
        if (ds.has_subjects()) out << "," << ds.subjects[i];
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// Train/test splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
    enum class Mode { kStratified, kBySubject };
    Mode mode = Mode::kStratified;
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
};

struct SplitResult {
    FeatureDataset train;
    FeatureDataset test;
    std::vector<std::size_t> classes_missing_from_train;  // warning, not an error
};

inline SplitResult split(const FeatureDataset& ds, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw ConfigError("split: train_fraction must be in (0,1)");
    Rng rng(derive_seed(spec.seed, {0x53504c4954ULL}));  // "SPLIT" stream
    std::vector<std::size_t> train_idx, test_idx;

    if (spec.mode == SplitSpec::Mode::kStratified) {
        std::vector<std::vector<std::size_t>> per_class(ds.class_count());
        for (std::size_t i = 0; i < ds.size(); ++i) per_class[ds.labels[i]].push_back(i);
        for (auto& idx : per_class) {
            rng.shuffle(idx);
            const std::size_t n_train = static_cast<std::size_t>(
                std::llround(spec.train_fraction * static_cast<double>(idx.size())));
            for (std::size_t r = 0; r < idx.size(); ++r)
                (r < n_train ? train_idx : test_idx).push_back(idx[r]);
        }
    } else {
        if (!ds.has_subjects())
            throw ConfigError("split: by_subject requires a subject column");
        std::vector<std::string> subjects;  // first-appearance order
        for (const auto& s : ds.subjects)
            if (std::find(subjects.begin(), subjects.end(), s) == subjects.end())
                subjects.push_back(s);
        if (subjects.size() < 2)
            throw ConfigError("split: by_subject needs at least two subjects");
        rng.shuffle(subjects);
        // nearest-integer subject count, at least one subject on each side
        std::size_t n_train = static_cast<std::size_t>(
            std::llround(spec.train_fraction * static_cast<double>(subjects.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, subjects.size() - 1);
        std::vector<std::string> train_subjects(subjects.begin(), subjects.begin() + n_train);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const bool in_train = std::find(train_subjects.begin(), train_subjects.end(),
                                            ds.subjects[i]) != train_subjects.end();
            (in_train ? train_idx : test_idx).push_back(i);
        }
    }

    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    SplitResult out;
    out.train = ds.select(train_idx);
    out.test = ds.select(test_idx);
    std::vector<bool> seen(ds.class_count(), false);
    for (std::size_t l : out.train.labels) seen[l] = true;
    for (std::size_t c = 0; c < ds.class_count(); ++c)
        if (!seen[c]) out.classes_missing_from_train.push_back(c);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Per-class sample-count profile. Geometric mimics a long-tailed class
// distribution: counts base, base*r, base*r^2, ...
struct ImbalanceProfile {
    enum class Kind { kBalanced, kGeometric };
    Kind kind = Kind::kBalanced;
    double ratio = 0.5;  // geometric decay

    static ImbalanceProfile balanced() { return {}; }
    static ImbalanceProfile geometric(double r) { return {Kind::kGeometric, r}; }
};

// Gaussian blobs: class means are random unit directions scaled by
// `separation`, isotropic unit covariance around them.
inline FeatureDataset synthetic_gaussians(std::size_t n_classes, std::size_t dim,
                                          double separation, std::size_t samples_per_class,
                                          const ImbalanceProfile& profile, std::uint64_t seed) {
    if (separation <= 0.0) throw ConfigError("synthetic_gaussians: separation must be > 0");
    if (n_classes == 0 || dim == 0 || samples_per_class == 0)
        throw ConfigError("synthetic_gaussians: empty shape");
    Rng rng(derive_seed(seed, {0x53594e5448ULL}));  // "SYNTH" stream

    Matrix means(n_classes, dim);
    for (std::size_t c = 0; c < n_classes; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            means(c, j) = rng.normal();
            norm += means(c, j) * means(c, j);
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j) means(c, j) *= separation / norm;
    }

    std::vector<std::size_t> counts(n_classes, samples_per_class);
    if (profile.kind == ImbalanceProfile::Kind::kGeometric) {
        double c = static_cast<double>(samples_per_class);
        for (std::size_t k = 0; k < n_classes; ++k) {
            counts[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(c)));
            c *= profile.ratio;
        }
    }

    FeatureDataset ds;
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    ds.features = Matrix(total, dim);
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        ds.class_names.push_back("class" + std::to_string(c));
        for (std::size_t s = 0; s < counts[c]; ++s, ++row) {
            for (std::size_t j = 0; j < dim; ++j) ds.features(row, j) = means(c, j) + rng.normal();
            ds.labels.push_back(c);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

inline std::vector<std::size_t> class_counts(const FeatureDataset& ds) {
    if (ds.size() == 0) throw ShapeError("class_counts: empty dataset");
    std::vector<std::size_t> counts(ds.class_count(), 0);
    for (std::size_t l : ds.labels) ++counts[l];
    return counts;
}

// Pearson correlation between per-class mean feature vectors; symmetric with
// unit diagonal.
inline Matrix class_correlation(const FeatureDataset& ds) {
    if (ds.size() == 0) throw ShapeError("class_correlation: empty dataset");
    const std::size_t n_classes = ds.class_count();
    Matrix means(n_classes, ds.dim());
    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ++counts[ds.labels[i]];
        for (std::size_t j = 0; j < ds.dim(); ++j) means(ds.labels[i], j) += ds.features(i, j);
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (counts[c] > 0)
            for (std::size_t j = 0; j < ds.dim(); ++j)
                means(c, j) /= static_cast<double>(counts[c]);

    auto pearson = [&](std::size_t a, std::size_t b) {
        const std::size_t d = ds.dim();
        double ma = 0.0, mb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            ma += means(a, j);
            mb += means(b, j);
        }
        ma /= static_cast<double>(d);
        mb /= static_cast<double>(d);
        double cov = 0.0, va = 0.0, vb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double da = means(a, j) - ma;
            const double db = means(b, j) - mb;
            cov += da * db;
            va += da * da;
            vb += db * db;
        }
        if (va == 0.0 || vb == 0.0) return a == b ? 1.0 : 0.0;
        return cov / std::sqrt(va * vb);
    };

    Matrix corr(n_classes, n_classes);
    for (std::size_t a = 0; a < n_classes; ++a) {
        corr(a, a) = 1.0;
        for (std::size_t b = a + 1; b < n_classes; ++b) {
            const double r = pearson(a, b);
            corr(a, b) = r;
            corr(b, a) = r;
        }
    }
    return corr;
}

// Zero-mean unit-variance scaling fit on the training split only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stdev;

    static Standardizer fit(const FeatureDataset& train) {
        if (train.size() == 0) throw ShapeError("Standardizer: empty training data");
        Standardizer s;
        s.mean.assign(train.dim(), 0.0);
        s.stdev.assign(train.dim(), 0.0);
        for (std::size_t i = 0; i < train.size(); ++i)
            for (std::size_t j = 0; j < train.dim(); ++j) s.mean[j] += train.features(i, j);
        for (double& m : s.mean) m /= static_cast<double>(train.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            for (std::size_t j = 0; j < train.dim(); ++j) {
                const double d = train.features(i, j) - s.mean[j];
                s.stdev[j] += d * d;
            }
        for (double& v : s.stdev) {
            v = std::sqrt(v / static_cast<double>(train.size()));
            if (v < 1e-12) v = 1.0;  // constant feature: leave centered only
        }
        return s;
    }

    void apply(FeatureDataset& ds) const {
        if (ds.dim() != mean.size()) throw ShapeError("Standardizer: dimension mismatch");
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t j = 0; j < ds.dim(); ++j)
                ds.features(i, j) = (ds.features(i, j) - mean[j]) / stdev[j];
    }
};

}  // namespace clbench

#endif  // CLBENCH_DATA_HPP
