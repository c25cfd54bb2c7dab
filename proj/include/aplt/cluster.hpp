#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "augment.hpp"
#include "data.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "nn.hpp"

namespace aplt::cluster {

enum class Method { semi_supervised, plain_kmeans };
enum class PrototypeMembers { filtered, all };

struct ClusterConfig {
    std::size_t max_iters = 100;
    double tol = 1e-6;
    std::size_t aug_copies = 3;
    bool use_labeled_aug = true;
    bool use_adaptive_threshold = true;
    Method method = Method::semi_supervised;
    PrototypeMembers prototype_members = PrototypeMembers::filtered;

    void validate() const {
        if (max_iters < 1) throw Error(ErrorKind::invalid_parameter, "max_iters must be >= 1");
        if (!(tol >= 0.0)) throw Error(ErrorKind::invalid_parameter, "tol must be >= 0");
    }
};

/// Features of every training sample under the current encoder.
struct FeatureSets {
    Matrix labeled;              // un-augmented labeled rows
    std::vector<int> labels;
    Matrix unlabeled;            // un-augmented unlabeled rows
    Matrix augmented;            // strong-augmented copies of labeled rows
    std::vector<int> augmented_labels;
};

struct ClusterResult {
    Matrix centroids;
    std::vector<int> assignments;     // class per unlabeled sample
    std::vector<double> distances;    // distance to the assigned centroid
    std::size_t iterations_run = 0;
    std::vector<double> objective;    // after each assignment step, then final
    std::size_t monotonic_violations = 0;
    std::vector<int> cluster_to_class;
    std::vector<std::string> warnings;
};

struct Thresholds {
    double global = 0.0;
    std::vector<double> local;
    std::vector<double> adapt;
    std::vector<int> empty_classes;
};

/// Filtered clustering pseudo-labels. `label_of` is indexed by unlabeled
/// position and holds -1 for discarded samples.
struct PseudoLabelSet {
    std::vector<std::size_t> kept;
    std::vector<int> labels;
    std::vector<int> label_of;
    double tau_global = 0.0;
    std::vector<double> tau_local;
    std::vector<double> tau_adapt;
    double coverage = 0.0;

    std::uint64_t hash() const {
        Fnv1a h;
        for (auto i : kept) h.add(static_cast<std::uint64_t>(i));
        for (int y : labels) h.add(static_cast<std::uint64_t>(y));
        h.add(tau_global);
        h.add(std::span<const double>(tau_local));
        h.add(std::span<const double>(tau_adapt));
        return h.value();
    }
};

/// Memory-based prototype classifier: one unit vector per class.
struct PrototypeBank {
    Matrix prototypes;
    std::vector<std::size_t> counts;
    std::size_t build_epoch = 0;

    std::size_t num_classes() const noexcept { return prototypes.rows(); }

    std::uint64_t hash() const {
        Fnv1a h;
        h.add(prototypes);
        for (auto n : counts) h.add(static_cast<std::uint64_t>(n));
        h.add(static_cast<std::uint64_t>(build_epoch));
        return h.value();
    }

    friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;
};

inline FeatureSets extract_all_features(const nn::EncoderModel& m, const data::TrainingView& view,
                                        const ClusterConfig& cfg, const augment::AugmentConfig& aug,
                                        std::mt19937_64& rng) {
    FeatureSets fs;
    fs.labeled = nn::forward_features(m, view.labeled);
    fs.labels = view.labels;
    fs.unlabeled = view.unlabeled.rows() > 0 ? nn::forward_features(m, view.unlabeled)
                                             : Matrix(0, m.shape.embed_dim);
    const std::size_t copies = cfg.use_labeled_aug ? cfg.aug_copies : 0;
    Matrix aug_inputs(view.labeled.rows() * copies, view.labeled.cols());
    std::size_t r = 0;
    for (std::size_t i = 0; i < view.labeled.rows(); ++i) {
        for (std::size_t k = 0; k < copies; ++k, ++r) {
            auto v = augment::strong(view.labeled.row(i), aug, rng);
            std::copy(v.begin(), v.end(), aug_inputs.row(r).begin());
            fs.augmented_labels.push_back(view.labels[i]);
        }
    }
    fs.augmented = copies > 0 ? nn::forward_features(m, aug_inputs) : Matrix(0, m.shape.embed_dim);
    return fs;
}

namespace detail {

inline std::size_t nearest(const Matrix& centroids, std::span<const double> x, double& dist2) {
    std::size_t best = 0;
    dist2 = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d2 = squared_distance(x, centroids.row(c));
        if (d2 < dist2) {
            dist2 = d2;
            best = c;
        }
    }
    return best;
}

inline void accumulate(Matrix& sums, std::vector<double>& counts, std::span<const double> x, std::size_t c) {
    auto s = sums.row(c);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += x[k];
    counts[c] += 1.0;
}

}  // namespace detail

/// Sum of squared distances of every member (anchors included) to its
/// centroid under the given unlabeled assignment.
inline double constrained_objective(const FeatureSets& fs, const Matrix& centroids,
                                    std::span<const int> assignments) {
    double j = 0.0;
    for (std::size_t i = 0; i < fs.labeled.rows(); ++i)
        j += squared_distance(fs.labeled.row(i), centroids.row(static_cast<std::size_t>(fs.labels[i])));
    for (std::size_t i = 0; i < fs.augmented.rows(); ++i)
        j += squared_distance(fs.augmented.row(i),
                              centroids.row(static_cast<std::size_t>(fs.augmented_labels[i])));
    for (std::size_t i = 0; i < fs.unlabeled.rows(); ++i)
        j += squared_distance(fs.unlabeled.row(i), centroids.row(static_cast<std::size_t>(assignments[i])));
    return j;
}

/// Semi-supervised spherical k-means. Labeled rows (and their augmented
/// copies) stay pinned to their ground-truth class; only unlabeled rows move.
inline ClusterResult ss_kmeans(const FeatureSets& fs, int num_classes, const ClusterConfig& cfg) {
    cfg.validate();
    const auto C = static_cast<std::size_t>(num_classes);
    const std::size_t e = fs.labeled.cols();
    Matrix anchor_sum(C, e);
    std::vector<double> anchor_count(C, 0.0);
    for (std::size_t i = 0; i < fs.labeled.rows(); ++i)
        detail::accumulate(anchor_sum, anchor_count, fs.labeled.row(i), static_cast<std::size_t>(fs.labels[i]));
    for (std::size_t c = 0; c < C; ++c)
        if (anchor_count[c] == 0.0)
            throw Error(ErrorKind::missing_labeled_class,
                        "class " + std::to_string(c) + " has no labeled feature");
    for (std::size_t i = 0; i < fs.augmented.rows(); ++i)
        detail::accumulate(anchor_sum, anchor_count, fs.augmented.row(i),
                           static_cast<std::size_t>(fs.augmented_labels[i]));

    ClusterResult res;
    res.centroids = anchor_sum;
    for (std::size_t c = 0; c < C; ++c) normalize_in_place(res.centroids.row(c));
    res.cluster_to_class.resize(C);
    for (std::size_t c = 0; c < C; ++c) res.cluster_to_class[c] = static_cast<int>(c);

    const std::size_t nu = fs.unlabeled.rows();
    res.assignments.assign(nu, 0);
    res.distances.assign(nu, 0.0);

    auto assign = [&] {
        for (std::size_t i = 0; i < nu; ++i) {
            double d2 = 0.0;
            res.assignments[i] = static_cast<int>(detail::nearest(res.centroids, fs.unlabeled.row(i), d2));
            res.distances[i] = std::sqrt(d2);
        }
        res.objective.push_back(constrained_objective(fs, res.centroids, res.assignments));
    };

    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        assign();
        Matrix sums = anchor_sum;
        std::vector<double> counts = anchor_count;
        for (std::size_t i = 0; i < nu; ++i)
            detail::accumulate(sums, counts, fs.unlabeled.row(i), static_cast<std::size_t>(res.assignments[i]));
        double shift = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            normalize_in_place(sums.row(c));
            shift = std::max(shift, std::sqrt(squared_distance(sums.row(c), res.centroids.row(c))));
        }
        res.centroids = std::move(sums);
        res.iterations_run = it;
        if (shift < cfg.tol) break;
    }
    assign();

    for (std::size_t k = 1; k < res.objective.size(); ++k)
        if (res.objective[k] > res.objective[k - 1] + 1e-9) ++res.monotonic_violations;
    if (res.monotonic_violations > 0)
        res.warnings.push_back("objective increased " + std::to_string(res.monotonic_violations) +
                               " time(s) after centroid re-normalization");
    return res;
}

/// Plain Lloyd's k-means over labeled and unlabeled features together,
/// farthest-point initialization, clusters mapped to classes by labeled
/// majority vote afterwards.
inline ClusterResult pure_kmeans(const FeatureSets& fs, int num_classes, const ClusterConfig& cfg) {
    cfg.validate();
    const auto C = static_cast<std::size_t>(num_classes);
    const std::size_t nl = fs.labeled.rows();
    const std::size_t nu = fs.unlabeled.rows();
    Matrix points(0, fs.labeled.cols());
    for (std::size_t i = 0; i < nl; ++i) points.append_row(fs.labeled.row(i));
    for (std::size_t i = 0; i < nu; ++i) points.append_row(fs.unlabeled.row(i));
    const std::size_t n = points.rows();
    if (n < C) throw Error(ErrorKind::invalid_parameter, "fewer points than clusters");

    ClusterResult res;
    // Farthest-point initialization starting from the point farthest from the data mean.
    std::vector<double> mean(points.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += points(i, k) / static_cast<double>(n);
    std::vector<double> mind(n);
    std::size_t first = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mind[i] = squared_distance(points.row(i), mean);
        if (mind[i] > mind[first]) first = i;
    }
    res.centroids = Matrix(0, points.cols());
    res.centroids.append_row(points.row(first));
    for (std::size_t i = 0; i < n; ++i) mind[i] = squared_distance(points.row(i), points.row(first));
    while (res.centroids.rows() < C) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (mind[i] > mind[far]) far = i;
        res.centroids.append_row(points.row(far));
        for (std::size_t i = 0; i < n; ++i)
            mind[i] = std::min(mind[i], squared_distance(points.row(i), points.row(far)));
    }

    std::vector<int> member(n, 0);
    std::vector<double> d2(n, 0.0);
    auto assign = [&] {
        double j = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            member[i] = static_cast<int>(detail::nearest(res.centroids, points.row(i), d2[i]));
            j += d2[i];
        }
        res.objective.push_back(j);
    };

    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        assign();
        Matrix sums(C, points.cols());
        std::vector<double> counts(C, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            detail::accumulate(sums, counts, points.row(i), static_cast<std::size_t>(member[i]));
        for (std::size_t c = 0; c < C; ++c) {
            if (counts[c] > 0.0) continue;
            // Empty cluster: reseed from the point worst served by its centroid.
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (d2[i] > d2[far]) far = i;
            auto src = points.row(far);
            std::copy(src.begin(), src.end(), sums.row(c).begin());
            counts[c] = 1.0;
            d2[far] = 0.0;
            res.warnings.push_back("empty cluster " + std::to_string(c) + " reseeded at iteration " +
                                   std::to_string(it));
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            for (double& v : sums.row(c)) v /= counts[c];
            shift = std::max(shift, std::sqrt(squared_distance(sums.row(c), res.centroids.row(c))));
        }
        res.centroids = std::move(sums);
        res.iterations_run = it;
        if (shift < cfg.tol) break;
    }
    assign();
    for (std::size_t k = 1; k < res.objective.size(); ++k)
        if (res.objective[k] > res.objective[k - 1] + 1e-9) ++res.monotonic_violations;

    // Majority vote of labeled members; ties go to the lowest class index.
    std::vector<std::vector<std::size_t>> votes(C, std::vector<std::size_t>(C, 0));
    std::vector<bool> has_labeled(C, false);
    for (std::size_t i = 0; i < nl; ++i) {
        ++votes[static_cast<std::size_t>(member[i])][static_cast<std::size_t>(fs.labels[i])];
        has_labeled[static_cast<std::size_t>(member[i])] = true;
    }
    res.cluster_to_class.assign(C, -1);
    std::vector<bool> claimed(C, false);
    for (std::size_t k = 0; k < C; ++k) {
        if (!has_labeled[k]) continue;
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (votes[k][c] > votes[k][best]) best = c;
        res.cluster_to_class[k] = static_cast<int>(best);
        claimed[best] = true;
    }
    for (std::size_t k = 0; k < C; ++k) {
        if (res.cluster_to_class[k] >= 0) continue;
        int pick = 0;
        for (std::size_t c = 0; c < C; ++c)
            if (!claimed[c]) {
                pick = static_cast<int>(c);
                claimed[c] = true;
                break;
            }
        res.cluster_to_class[k] = pick;
        res.warnings.push_back("cluster " + std::to_string(k) + " has no labeled member, mapped to class " +
                               std::to_string(pick));
    }

    res.assignments.resize(nu);
    res.distances.resize(nu);
    for (std::size_t i = 0; i < nu; ++i) {
        res.assignments[i] = res.cluster_to_class[static_cast<std::size_t>(member[nl + i])];
        res.distances[i] = std::sqrt(d2[nl + i]);
    }
    return res;
}

/// Self-adaptive per-class distance thresholds:
///   global   = mean distance over all unlabeled samples
///   local(c) = mean distance over samples assigned to c (0 if none)
///   adapt(c) = local(c) / max(local) * global
inline Thresholds adaptive_thresholds(const ClusterResult& result, int num_classes) {
    const auto C = static_cast<std::size_t>(num_classes);
    const std::size_t nu = result.distances.size();
    if (nu == 0) throw Error(ErrorKind::invalid_parameter, "adaptive thresholds need unlabeled samples");
    Thresholds t;
    t.local.assign(C, 0.0);
    std::vector<std::size_t> counts(C, 0);
    double total = 0.0;
    for (std::size_t i = 0; i < nu; ++i) {
        total += result.distances[i];
        const auto c = static_cast<std::size_t>(result.assignments[i]);
        t.local[c] += result.distances[i];
        ++counts[c];
    }
    t.global = total / static_cast<double>(nu);
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            t.empty_classes.push_back(static_cast<int>(c));
            continue;
        }
        t.local[c] /= static_cast<double>(counts[c]);
    }
    const double mx = *std::max_element(t.local.begin(), t.local.end());
    t.adapt.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) t.adapt[c] = mx > 0.0 ? t.local[c] / mx * t.global : t.global;
    return t;
}

inline PseudoLabelSet filter_pseudo_labels(const ClusterResult& result, const Thresholds& thresholds,
                                           const ClusterConfig& cfg) {
    PseudoLabelSet set;
    set.tau_global = thresholds.global;
    set.tau_local = thresholds.local;
    set.tau_adapt = thresholds.adapt;
    const std::size_t nu = result.assignments.size();
    set.label_of.assign(nu, -1);
    for (std::size_t i = 0; i < nu; ++i) {
        const int c = result.assignments[i];
        const bool keep = !cfg.use_adaptive_threshold ||
                          result.distances[i] <= thresholds.adapt[static_cast<std::size_t>(c)];
        if (!keep) continue;
        set.kept.push_back(i);
        set.labels.push_back(c);
        set.label_of[i] = c;
    }
    set.coverage = nu == 0 ? 0.0 : static_cast<double>(set.kept.size()) / static_cast<double>(nu);
    return set;
}

/// Class means of labeled features plus kept unlabeled features, each
/// normalized to unit length. `counts` are member counts before normalization.
inline PrototypeBank build_prototypes(const Matrix& labeled, std::span<const int> labels,
                                      const Matrix& unlabeled, const PseudoLabelSet& pseudo,
                                      int num_classes, std::size_t epoch = 0) {
    const auto C = static_cast<std::size_t>(num_classes);
    PrototypeBank bank;
    bank.build_epoch = epoch;
    bank.prototypes = Matrix(C, labeled.cols());
    std::vector<double> counts(C, 0.0);
    for (std::size_t i = 0; i < labeled.rows(); ++i)
        detail::accumulate(bank.prototypes, counts, labeled.row(i), static_cast<std::size_t>(labels[i]));
    for (std::size_t k = 0; k < pseudo.kept.size(); ++k)
        detail::accumulate(bank.prototypes, counts, unlabeled.row(pseudo.kept[k]),
                           static_cast<std::size_t>(pseudo.labels[k]));
    bank.counts.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        bank.counts[c] = static_cast<std::size_t>(counts[c]);
        if (counts[c] > 0.0)
            for (double& v : bank.prototypes.row(c)) v /= counts[c];
        normalize_in_place(bank.prototypes.row(c));
    }
    return bank;
}

/// Everything one offline event produces.
struct OfflineOutcome {
    ClusterResult clustering;
    Thresholds thresholds;
    PseudoLabelSet pseudo;
    PrototypeBank bank;
};

inline OfflineOutcome run_offline(const FeatureSets& fs, int num_classes, const ClusterConfig& cfg,
                                  std::size_t epoch) {
    OfflineOutcome out;
    out.clustering = cfg.method == Method::semi_supervised ? ss_kmeans(fs, num_classes, cfg)
                                                           : pure_kmeans(fs, num_classes, cfg);
    out.thresholds = adaptive_thresholds(out.clustering, num_classes);
    out.pseudo = filter_pseudo_labels(out.clustering, out.thresholds, cfg);
    if (cfg.prototype_members == PrototypeMembers::all) {
        ClusterConfig keep_all = cfg;
        keep_all.use_adaptive_threshold = false;
        const auto everyone = filter_pseudo_labels(out.clustering, out.thresholds, keep_all);
        out.bank = build_prototypes(fs.labeled, fs.labels, fs.unlabeled, everyone, num_classes, epoch);
    } else {
        out.bank = build_prototypes(fs.labeled, fs.labels, fs.unlabeled, out.pseudo, num_classes, epoch);
    }
    return out;
}

}  // namespace aplt::cluster
