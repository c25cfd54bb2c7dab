#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace aplt::data {

/// Feature vectors with a labeled/unlabeled split. `true_labels` of
/// unlabeled rows exist for scoring only; training code goes through
/// TrainingView, which never exposes them.
struct FeatureDataset {
    Matrix features;
    std::vector<int> true_labels;
    std::vector<bool> labeled_mask;
    int num_classes = 0;

    std::size_t size() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }

    std::vector<std::size_t> labeled_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (labeled_mask[i]) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> unlabeled_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (!labeled_mask[i]) out.push_back(i);
        return out;
    }
    bool fully_labeled() const {
        return std::all_of(labeled_mask.begin(), labeled_mask.end(), [](bool b) { return b; });
    }

    friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

struct SplitSpec {
    double labeled_ratio = 0.1;
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// What the training path is allowed to see: labeled rows with their labels
/// and unlabeled rows without.
struct TrainingView {
    Matrix labeled;
    std::vector<int> labels;
    Matrix unlabeled;
    int num_classes = 0;
};

inline TrainingView training_view(const FeatureDataset& ds) {
    TrainingView v;
    v.num_classes = ds.num_classes;
    const auto li = ds.labeled_indices();
    const auto ui = ds.unlabeled_indices();
    v.labeled = select_rows(ds.features, li);
    v.unlabeled = select_rows(ds.features, ui);
    v.labels.reserve(li.size());
    for (auto i : li) v.labels.push_back(ds.true_labels[i]);
    if (v.unlabeled.cols() == 0) v.unlabeled = Matrix(0, ds.dim());
    if (v.labeled.cols() == 0) v.labeled = Matrix(0, ds.dim());
    return v;
}

/// Evaluation-only labels of the unlabeled rows, in TrainingView order.
inline std::vector<int> unlabeled_truth(const FeatureDataset& ds) {
    std::vector<int> out;
    for (auto i : ds.unlabeled_indices()) out.push_back(ds.true_labels[i]);
    return out;
}

/// Isotropic Gaussian mixture. Class means are C orthonormal directions
/// scaled to pairwise distance 1 (regular simplex) when C <= d, otherwise
/// random unit directions rescaled so the closest pair sits at distance 1.
/// `overlap` is the noise sigma over that minimum distance.
inline FeatureDataset generate_synthetic(int num_classes, int dim, int n_per_class,
                                         double overlap, std::uint64_t seed) {
    if (num_classes < 2)
        throw Error(ErrorKind::invalid_parameter, "class count must be >= 2");
    if (dim < 2) throw Error(ErrorKind::invalid_parameter, "dimension must be >= 2");
    if (n_per_class < 4)
        throw Error(ErrorKind::invalid_parameter, "n_per_class must be >= 4");
    if (!(overlap >= 0.0) || !std::isfinite(overlap))
        throw Error(ErrorKind::invalid_parameter, "overlap must be a finite nonnegative number");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto C = static_cast<std::size_t>(num_classes);
    const auto d = static_cast<std::size_t>(dim);

    Matrix means(C, d);
    for (auto& v : means.values()) v = gauss(rng);
    if (C <= d) {
        for (std::size_t c = 0; c < C; ++c) {
            auto row = means.row(c);
            for (std::size_t p = 0; p < c; ++p) {
                const double proj = dot(row, means.row(p));
                auto prev = means.row(p);
                for (std::size_t k = 0; k < d; ++k) row[k] -= proj * prev[k];
            }
            normalize_in_place(row);
        }
        for (auto& v : means.values()) v /= std::sqrt(2.0);
    } else {
        for (std::size_t c = 0; c < C; ++c) normalize_in_place(means.row(c));
        double min_dist = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < C; ++a)
            for (std::size_t b = a + 1; b < C; ++b)
                min_dist = std::min(min_dist, std::sqrt(squared_distance(means.row(a), means.row(b))));
        for (auto& v : means.values()) v /= min_dist;
    }

    FeatureDataset ds;
    ds.num_classes = num_classes;
    ds.features = Matrix(C * static_cast<std::size_t>(n_per_class), d);
    ds.true_labels.resize(ds.features.rows());
    ds.labeled_mask.assign(ds.features.rows(), true);
    std::size_t r = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (int i = 0; i < n_per_class; ++i, ++r) {
            auto row = ds.features.row(r);
            auto mu = means.row(c);
            for (std::size_t k = 0; k < d; ++k) row[k] = mu[k] + overlap * gauss(rng);
            ds.true_labels[r] = static_cast<int>(c);
        }
    }
    return ds;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const FeatureDataset& ds,
                                                              std::span<const std::size_t> rows) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(ds.num_classes));
    for (auto i : rows) out[static_cast<std::size_t>(ds.true_labels[i])].push_back(i);
    return out;
}

/// Marks a labeled subset. Stratified mode labels max(1, round(ratio * n_c))
/// samples of every class.
inline FeatureDataset apply_split(const FeatureDataset& ds, const SplitSpec& spec) {
    if (!(spec.labeled_ratio > 0.0 && spec.labeled_ratio < 1.0))
        throw Error(ErrorKind::invalid_parameter, "labeled_ratio must lie in (0,1)");
    if (!ds.fully_labeled())
        throw Error(ErrorKind::invalid_parameter, "apply_split needs a fully labeled dataset");

    FeatureDataset out = ds;
    out.labeled_mask.assign(ds.size(), false);
    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);

    if (spec.stratified) {
        auto by_class = indices_by_class(ds, all);
        for (auto& members : by_class) {
            if (members.empty()) continue;
            std::shuffle(members.begin(), members.end(), rng);
            const auto want = static_cast<std::size_t>(
                std::llround(spec.labeled_ratio * static_cast<double>(members.size())));
            const auto take = std::min(members.size(), std::max<std::size_t>(1, want));
            for (std::size_t k = 0; k < take; ++k) out.labeled_mask[members[k]] = true;
        }
    } else {
        std::shuffle(all.begin(), all.end(), rng);
        const auto take = static_cast<std::size_t>(
            std::llround(spec.labeled_ratio * static_cast<double>(all.size())));
        for (std::size_t k = 0; k < take; ++k) out.labeled_mask[all[k]] = true;
    }

    std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes), false);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.labeled_mask[i]) seen[static_cast<std::size_t>(out.true_labels[i])] = true;
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (!seen[c])
            throw Error(ErrorKind::ratio_too_small,
                        "class " + std::to_string(c) + " received no labeled sample");
    return out;
}

/// Splits off a stratified test set. When the dataset already carries a
/// labeled/unlabeled split, test rows are drawn from the unlabeled rows only.
inline std::pair<FeatureDataset, FeatureDataset> holdout_test(const FeatureDataset& ds,
                                                              double fraction,
                                                              std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw Error(ErrorKind::invalid_parameter, "test fraction must lie in [0,1)");
    const bool from_all = ds.fully_labeled();
    std::vector<std::size_t> candidates = from_all ? std::vector<std::size_t>(ds.size())
                                                   : ds.unlabeled_indices();
    if (from_all) std::iota(candidates.begin(), candidates.end(), 0);

    std::mt19937_64 rng(seed ^ 0x7e57'5eed'0000'0001ULL);
    std::vector<bool> is_test(ds.size(), false);
    for (auto& members : indices_by_class(ds, candidates)) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < take && k < members.size(); ++k) is_test[members[k]] = true;
    }

    FeatureDataset train, test;
    train.num_classes = test.num_classes = ds.num_classes;
    train.features = Matrix(0, ds.dim());
    test.features = Matrix(0, ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& dst = is_test[i] ? test : train;
        dst.features.append_row(ds.features.row(i));
        dst.true_labels.push_back(ds.true_labels[i]);
        dst.labeled_mask.push_back(is_test[i] ? false : ds.labeled_mask[i]);
    }
    return {std::move(train), std::move(test)};
}

/// Checks the preconditions of a training run.
inline void validate_for_training(const FeatureDataset& ds) {
    if (ds.num_classes < 1) throw Error(ErrorKind::invalid_parameter, "no classes");
    if (ds.true_labels.size() != ds.size() || ds.labeled_mask.size() != ds.size())
        throw Error(ErrorKind::dimension_mismatch, "label/mask length differs from row count");
    std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes), false);
    bool any_labeled = false, any_unlabeled = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int y = ds.true_labels[i];
        if (y < 0 || y >= ds.num_classes)
            throw Error(ErrorKind::unknown_class, "row " + std::to_string(i));
        if (ds.labeled_mask[i]) {
            seen[static_cast<std::size_t>(y)] = true;
            any_labeled = true;
        } else {
            any_unlabeled = true;
        }
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (!seen[c])
            throw Error(ErrorKind::missing_labeled_class,
                        "class " + std::to_string(c) + " has no labeled sample");
    if (!any_labeled || !any_unlabeled)
        throw Error(ErrorKind::invalid_parameter,
                    "training needs at least one labeled and one unlabeled row");
}

/// Test harness hook: replaces every unlabeled row's true label with a
/// random class. Training outputs must not change.
inline FeatureDataset poison_unlabeled_labels(const FeatureDataset& ds, std::uint64_t seed) {
    FeatureDataset out = ds;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, ds.num_classes - 1);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!out.labeled_mask[i]) out.true_labels[i] = pick(rng);
    return out;
}

// ---- CSV ------------------------------------------------------------------

inline std::string to_csv(const FeatureDataset& ds) {
    std::string out = "id,label,labeled";
    for (std::size_t k = 0; k < ds.dim(); ++k) out += ",f" + std::to_string(k);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += std::to_string(ds.true_labels[i]);
        out += ds.labeled_mask[i] ? ",1" : ",0";
        for (double v : ds.features.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline void save_csv(const FeatureDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io_error, "cannot open " + path + " for writing");
    f << to_csv(ds);
    if (!f) throw Error(ErrorKind::io_error, "write failed for " + path);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace detail

/// Parses the `id,label,labeled,f0..` format. `num_classes` of 0 infers C
/// as max label + 1.
inline FeatureDataset parse_csv(std::istream& in, int num_classes = 0) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::parse_error, "row 0: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_commas(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "labeled")
        throw Error(ErrorKind::parse_error, "row 0: header must be id,label,labeled,f0..");
    const std::size_t d = header.size() - 3;
    for (std::size_t k = 0; k < d; ++k)
        if (header[3 + k] != "f" + std::to_string(k))
            throw Error(ErrorKind::parse_error, "row 0: expected column f" + std::to_string(k));

    FeatureDataset ds;
    ds.features = Matrix(0, d);
    std::vector<double> row(d);
    std::size_t rowno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++rowno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_commas(line);
        const std::string where = "row " + std::to_string(rowno);
        if (cells.size() != d + 3)
            throw Error(ErrorKind::dimension_mismatch,
                        where + ": expected " + std::to_string(d) + " feature columns, got " +
                            std::to_string(cells.size() < 3 ? 0 : cells.size() - 3));
        long long id = 0;
        int label = 0, labeled = 0;
        if (!detail::parse_number(cells[0], id)) throw Error(ErrorKind::parse_error, where + ": bad id");
        if (!detail::parse_number(cells[1], label) || label < 0)
            throw Error(ErrorKind::parse_error, where + ": bad label");
        if (!detail::parse_number(cells[2], labeled) || (labeled != 0 && labeled != 1))
            throw Error(ErrorKind::parse_error, where + ": labeled must be 0 or 1");
        for (std::size_t k = 0; k < d; ++k)
            if (!detail::parse_number(cells[3 + k], row[k]) || !std::isfinite(row[k]))
                throw Error(ErrorKind::parse_error, where + ": bad value in f" + std::to_string(k));
        if (num_classes > 0 && label >= num_classes)
            throw Error(ErrorKind::unknown_class,
                        where + ": label " + std::to_string(label) + " >= " + std::to_string(num_classes));
        max_label = std::max(max_label, label);
        ds.features.append_row(row);
        ds.true_labels.push_back(label);
        ds.labeled_mask.push_back(labeled == 1);
    }
    ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    return ds;
}

inline FeatureDataset load_csv(const std::string& path, int num_classes = 0) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io_error, "cannot open " + path);
    return parse_csv(f, num_classes);
}

/// Accuracy of assigning each row to its nearest class mean, where means are
/// taken over `mean_rows` with their true labels.
inline double nearest_mean_accuracy(const FeatureDataset& ds, std::span<const std::size_t> mean_rows,
                                    std::span<const std::size_t> eval_rows) {
    const auto C = static_cast<std::size_t>(ds.num_classes);
    Matrix means(C, ds.dim());
    std::vector<double> counts(C, 0.0);
    for (auto i : mean_rows) {
        const auto y = static_cast<std::size_t>(ds.true_labels[i]);
        auto m = means.row(y);
        auto x = ds.features.row(i);
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += x[k];
        counts[y] += 1.0;
    }
    for (std::size_t c = 0; c < C; ++c)
        if (counts[c] > 0)
            for (double& v : means.row(c)) v /= counts[c];
    std::size_t hits = 0;
    for (auto i : eval_rows) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < C; ++c) {
            if (counts[c] == 0) continue;
            const double dd = squared_distance(ds.features.row(i), means.row(c));
            if (dd < best_d) {
                best_d = dd;
                best = c;
            }
        }
        if (static_cast<int>(best) == ds.true_labels[i]) ++hits;
    }
    return eval_rows.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(eval_rows.size());
}

}  // namespace aplt::data
