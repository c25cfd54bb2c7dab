#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "augment.hpp"
#include "cluster.hpp"
#include "data.hpp"
#include "error.hpp"
#include "fixmatch.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "proto.hpp"

namespace aplt::engine {

enum class Mode { aplt, fixmatch, supervised };

inline const char* to_string(Mode m) {
    switch (m) {
    case Mode::aplt: return "aplt";
    case Mode::fixmatch: return "fixmatch";
    case Mode::supervised: return "supervised";
    }
    return "?";
}

struct PhaseSchedule {
    std::size_t warmup_epochs = 15;
    std::size_t main_epochs = 40;
    std::size_t offline_every = 10;
    bool sync_mode = false;        // refresh pseudo-labels and prototypes every epoch
    bool offline_enabled = true;

    std::size_t total_epochs() const noexcept { return warmup_epochs + main_epochs; }

    /// Offline events run at the start of epoch `warmup`, then every
    /// `offline_every` epochs (every epoch in sync mode).
    bool is_offline_epoch(std::size_t epoch) const noexcept {
        if (!offline_enabled || epoch < warmup_epochs || epoch >= total_epochs()) return false;
        return sync_mode || (epoch - warmup_epochs) % offline_every == 0;
    }

    std::size_t offline_event_count() const noexcept {
        if (!offline_enabled || main_epochs == 0) return 0;
        if (sync_mode) return main_epochs;
        return 1 + (main_epochs - 1) / offline_every;
    }

    void validate() const {
        if (offline_every < 1) throw Error(ErrorKind::invalid_parameter, "offline_every must be >= 1");
    }
};

struct OptimConfig {
    double lr = 0.002;
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t embed = 32;
    bool feature_norm = true;
};

struct DataSource {
    enum class Kind { synthetic, csv } kind = Kind::synthetic;
    std::string path;
    int classes = 12;
    int dim = 32;
    int n_per_class = 100;
    double overlap = 0.35;
    std::uint64_t seed = 1;
    double test_fraction = 0.2;
};

struct RunConfig {
    DataSource data;
    data::SplitSpec split;
    augment::AugmentConfig augment;
    fixmatch::FixMatchConfig fixmatch;
    cluster::ClusterConfig cluster;
    proto::MarginConfig margin;
    PhaseSchedule schedule;
    ModelConfig model;
    OptimConfig optim;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    void validate() const {
        augment.validate();
        fixmatch.validate();
        cluster.validate();
        margin.validate();
        schedule.validate();
        if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0))
            throw Error(ErrorKind::invalid_parameter, "test_fraction must lie in [0,1)");
        if (!(optim.lr >= 0.0)) throw Error(ErrorKind::invalid_parameter, "lr must be >= 0");
        if (model.hidden == 0 || model.embed == 0)
            throw Error(ErrorKind::invalid_parameter, "model sizes must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::string phase;              // "warmup" or "main"
    double lr = 0.0;
    double loss_logits = 0.0;       // mean over steps
    double loss_margin = 0.0;
    double loss_total = 0.0;
    std::size_t pass_count = 0;     // unlabeled samples passing tau this epoch
    std::size_t unlabeled_seen = 0;
    std::optional<double> fixmatch_pseudo_acc;  // evaluation only
    std::optional<double> proto_acc;
    double param_acc = 0.0;
    std::optional<std::uint64_t> bank_hash;
    std::optional<std::uint64_t> pseudo_hash;
    std::optional<double> active_coverage;
    std::optional<double> active_pseudo_acc;
};

struct OfflineRecord {
    std::size_t epoch = 0;
    std::size_t iterations = 0;
    double coverage = 0.0;
    double tau_global = 0.0;
    std::vector<double> tau_local;
    std::vector<double> tau_adapt;
    std::optional<double> pseudo_acc;      // over kept samples, evaluation only
    double assignment_acc = 0.0;           // over all unlabeled, evaluation only
    std::vector<int> empty_classes;
    std::vector<std::string> warnings;
    std::size_t monotonic_violations = 0;
    std::uint64_t bank_hash = 0;
    std::uint64_t pseudo_hash = 0;
};

struct RunMetrics {
    std::string mode;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::vector<OfflineRecord> offline;
    std::optional<double> final_proto_acc;
    double final_param_acc = 0.0;
    double final_test_acc = 0.0;
};

struct RunResult {
    RunMetrics metrics;
    nn::EncoderModel model;
    std::optional<cluster::PrototypeBank> bank;
};

/// Optional per-epoch observer, used by tests to inspect frozen state.
using EpochObserver = std::function<void(const EpochRecord&, const nn::EncoderModel&,
                                         const cluster::PrototypeBank*, const cluster::PseudoLabelSet*)>;

// ---- single optimization step ---------------------------------------------

/// Pre-augmented inputs of one step. Margin views may be empty when no
/// prototype bank exists yet.
struct StepBatch {
    Matrix labeled_weak;
    Matrix labeled_strong;
    std::vector<int> labels;
    Matrix unlabeled_weak;
    Matrix unlabeled_strong;
    std::vector<int> unlabeled_targets;  // offline pseudo-labels, -1 if not kept
};

struct StepOutcome {
    double loss_logits = 0.0;
    double loss_margin = 0.0;
    double loss_total = 0.0;
    std::size_t pass_count = 0;
    std::vector<int> fixmatch_pseudo;  // -1 where below tau
    nn::Gradients grads;
};

/// L = L_logits + lambda * L_margin with gradients. The margin part is only
/// evaluated when `bank` is given; `use_unlabeled` off drops the consistency term.
inline StepOutcome compute_step(const nn::EncoderModel& m, const StepBatch& b,
                                const cluster::PrototypeBank* bank, const fixmatch::FixMatchConfig& fm,
                                const proto::MarginConfig& mc, bool use_unlabeled = true) {
    StepOutcome out;
    out.grads = m.params.zeros_like();
    const bool has_unlabeled = b.unlabeled_weak.rows() > 0;
    const bool strong_margin = mc.view == proto::View::strong;

    // One forward pass per view; gradients from every loss term are
    // collected per view and back-propagated once.
    struct ViewGrad {
        std::optional<nn::ForwardCache> cache;
        Matrix logits;
        Matrix features;
    };
    ViewGrad lw, ls, uw, us;
    auto ensure = [&](ViewGrad& v, const Matrix& x) {
        if (!v.cache) v.cache = nn::forward(m, x);
        return &*v.cache;
    };

    const auto* lwc = ensure(lw, b.labeled_weak);
    auto sup = fixmatch::cross_entropy_terms(lwc->logits, b.labels);
    out.loss_logits = sup.value;
    lw.logits = std::move(sup.grad_logits);

    if (use_unlabeled && has_unlabeled) {
        const auto* uwc = ensure(uw, b.unlabeled_weak);
        const auto* usc = ensure(us, b.unlabeled_strong);
        auto uns = fixmatch::unlabeled_terms(uwc->probs, usc->logits, fm.tau);
        out.loss_logits += uns.value;
        out.pass_count = uns.pass_count;
        out.fixmatch_pseudo = std::move(uns.targets);
        us.logits = std::move(uns.grad_logits);
    }

    if (bank != nullptr) {
        auto& lv = strong_margin ? ls : lw;
        const auto* lc = ensure(lv, strong_margin ? b.labeled_strong : b.labeled_weak);
        auto msup = proto::margin_terms(*bank, lc->features, b.labels, mc.temperature);
        out.loss_margin = msup.value;
        for (double& v : msup.grad_features.values()) v *= mc.lambda;
        lv.features = std::move(msup.grad_features);
        if (has_unlabeled) {
            auto& uv = strong_margin ? us : uw;
            const auto* uc = ensure(uv, strong_margin ? b.unlabeled_strong : b.unlabeled_weak);
            auto mu = proto::margin_terms(*bank, uc->features, b.unlabeled_targets, mc.temperature);
            out.loss_margin += mu.value;
            for (double& v : mu.grad_features.values()) v *= mc.lambda;
            uv.features = std::move(mu.grad_features);
        }
    }

    for (auto* v : {&lw, &ls, &uw, &us})
        if (v->cache) nn::backward(m, *v->cache, v->logits, v->features, out.grads);

    out.loss_total = out.loss_logits + mc.lambda * out.loss_margin;
    return out;
}

// ---- evaluation -------------------------------------------------------------

struct Accuracy {
    std::optional<double> proto;
    double param = 0.0;
};

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline std::vector<int> argmax_rows(const Matrix& probs) {
    std::vector<int> out(probs.rows(), 0);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c)
            if (p[c] > p[best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

/// Top-1 accuracy of the prototype classifier (when a bank is given) and of
/// the parametric head.
inline Accuracy evaluate(const nn::EncoderModel& m, const cluster::PrototypeBank* bank,
                         const Matrix& features, std::span<const int> labels) {
    Accuracy acc;
    if (features.rows() == 0) return acc;
    const auto cache = nn::forward(m, features);
    acc.param = accuracy(argmax_rows(cache.probs), labels);
    if (bank != nullptr) acc.proto = accuracy(proto::predict(*bank, cache.features), labels);
    return acc;
}

// ---- data preparation -------------------------------------------------------

struct PreparedData {
    data::FeatureDataset train;
    data::FeatureDataset test;
};

/// Builds the train/test split described by the config. Synthetic data is
/// generated fully labeled, a test set is held out, then the labeled split is
/// applied. CSV data keeps its own labeled column when it has one.
inline PreparedData prepare_data(const RunConfig& cfg) {
    data::FeatureDataset full;
    if (cfg.data.kind == DataSource::Kind::synthetic) {
        full = data::generate_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.n_per_class,
                                        cfg.data.overlap, cfg.data.seed);
    } else {
        if (cfg.data.path.empty()) throw Error(ErrorKind::config_error, "data.path is empty");
        full = data::load_csv(cfg.data.path, 0);
    }
    auto [train, test] = data::holdout_test(full, cfg.data.test_fraction, cfg.split.seed);
    if (train.fully_labeled()) train = data::apply_split(train, cfg.split);
    return {std::move(train), std::move(test)};
}

// ---- training driver --------------------------------------------------------

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
}

}  // namespace detail

/// Trains one model. FixMatch and supervised modes never run offline events.
inline RunResult run(const data::FeatureDataset& train, const data::FeatureDataset& test,
                     const RunConfig& cfg, Mode mode, const EpochObserver& observer = {}) {
    cfg.validate();
    data::validate_for_training(train);
    const auto view = data::training_view(train);
    const auto truth_u = data::unlabeled_truth(train);  // evaluation only
    const auto C = train.num_classes;

    auto init_rng = detail::stream(cfg.seed, 1);
    auto order_rng = detail::stream(cfg.seed, 2);
    auto aug_rng = detail::stream(cfg.seed, 3);
    auto offline_rng = detail::stream(cfg.seed, 4);

    nn::ModelShape shape{train.dim(), cfg.model.hidden, cfg.model.embed, static_cast<std::size_t>(C),
                         cfg.model.feature_norm};
    RunResult result;
    result.model = nn::init_model(shape, init_rng);
    auto& model = result.model;
    auto opt = nn::OptimizerState::for_model(model);
    opt.momentum = cfg.optim.momentum;
    opt.weight_decay = cfg.optim.weight_decay;
    opt.base_lr = cfg.optim.lr;

    auto& metrics = result.metrics;
    metrics.mode = to_string(mode);
    metrics.seed = cfg.seed;

    const std::size_t B = cfg.fixmatch.batch_size;
    const std::size_t nu = view.unlabeled.rows();
    const std::size_t nl = view.labeled.rows();
    const std::size_t total = cfg.schedule.total_epochs();
    const bool offline_mode = mode == Mode::aplt;

    std::optional<cluster::PrototypeBank> bank;
    std::optional<cluster::PseudoLabelSet> pseudo;
    std::optional<double> active_pseudo_acc;

    std::vector<std::size_t> lab_order(nl), unl_order(nu);
    std::iota(lab_order.begin(), lab_order.end(), 0);
    std::iota(unl_order.begin(), unl_order.end(), 0);
    std::size_t lab_cursor = nl;  // forces a shuffle on first use

    for (std::size_t epoch = 0; epoch < total; ++epoch) {
        if (offline_mode && cfg.schedule.is_offline_epoch(epoch)) {
            const auto fs = cluster::extract_all_features(model, view, cfg.cluster, cfg.augment, offline_rng);
            auto outcome = cluster::run_offline(fs, C, cfg.cluster, epoch);
            OfflineRecord rec;
            rec.epoch = epoch;
            rec.iterations = outcome.clustering.iterations_run;
            rec.coverage = outcome.pseudo.coverage;
            rec.tau_global = outcome.thresholds.global;
            rec.tau_local = outcome.thresholds.local;
            rec.tau_adapt = outcome.thresholds.adapt;
            rec.empty_classes = outcome.thresholds.empty_classes;
            rec.warnings = outcome.clustering.warnings;
            for (int c : rec.empty_classes)
                rec.warnings.push_back("class " + std::to_string(c) + " has no assigned unlabeled sample");
            rec.monotonic_violations = outcome.clustering.monotonic_violations;
            rec.assignment_acc = accuracy(outcome.clustering.assignments, truth_u);
            if (!outcome.pseudo.kept.empty()) {
                std::size_t hits = 0;
                for (std::size_t k = 0; k < outcome.pseudo.kept.size(); ++k)
                    if (outcome.pseudo.labels[k] == truth_u[outcome.pseudo.kept[k]]) ++hits;
                rec.pseudo_acc = static_cast<double>(hits) / static_cast<double>(outcome.pseudo.kept.size());
            }
            rec.bank_hash = outcome.bank.hash();
            rec.pseudo_hash = outcome.pseudo.hash();
            active_pseudo_acc = rec.pseudo_acc;
            metrics.offline.push_back(std::move(rec));
            bank = std::move(outcome.bank);
            pseudo = std::move(outcome.pseudo);
        }

        const double lr = nn::cosine_lr(static_cast<double>(epoch), static_cast<double>(total), cfg.optim.lr);
        std::shuffle(unl_order.begin(), unl_order.end(), order_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = epoch < cfg.schedule.warmup_epochs ? "warmup" : "main";
        rec.lr = lr;
        std::size_t pass_hits = 0;
        std::size_t steps = 0;
        const std::size_t n_steps = nu == 0 ? 1 : (nu + B - 1) / B;

        for (std::size_t s = 0; s < n_steps; ++s) {
            std::vector<std::size_t> lidx(B), uidx;
            for (auto& li : lidx) {
                if (lab_cursor >= nl) {
                    std::shuffle(lab_order.begin(), lab_order.end(), order_rng);
                    lab_cursor = 0;
                }
                li = lab_order[lab_cursor++];
            }
            for (std::size_t k = s * B; k < std::min(nu, (s + 1) * B); ++k) uidx.push_back(unl_order[k]);

            StepBatch batch;
            const Matrix xl = select_rows(view.labeled, lidx);
            const Matrix xu = select_rows(view.unlabeled, uidx);
            batch.labels.reserve(B);
            for (auto i : lidx) batch.labels.push_back(view.labels[i]);
            batch.labeled_weak = augment::weak_batch(xl, cfg.augment, aug_rng);
            const bool use_unlabeled = mode != Mode::supervised && !uidx.empty();
            if (use_unlabeled) {
                batch.unlabeled_weak = augment::weak_batch(xu, cfg.augment, aug_rng);
                batch.unlabeled_strong = augment::strong_batch(xu, cfg.augment, aug_rng);
            }
            const cluster::PrototypeBank* active = (offline_mode && bank) ? &*bank : nullptr;
            if (active != nullptr) {
                if (cfg.margin.view == proto::View::strong)
                    batch.labeled_strong = augment::strong_batch(xl, cfg.augment, aug_rng);
                batch.unlabeled_targets.reserve(uidx.size());
                for (auto i : uidx) batch.unlabeled_targets.push_back(pseudo->label_of[i]);
            }

            auto step = compute_step(model, batch, active, cfg.fixmatch, cfg.margin, use_unlabeled);
            if (!std::isfinite(step.loss_total))
                throw Error(ErrorKind::nonfinite, "nonfinite loss at epoch " + std::to_string(epoch) +
                                                      ", step " + std::to_string(s));
            nn::sgd_step(model, opt, step.grads, lr);

            rec.loss_logits += step.loss_logits;
            rec.loss_margin += step.loss_margin;
            rec.loss_total += step.loss_total;
            rec.pass_count += step.pass_count;
            rec.unlabeled_seen += uidx.size();
            for (std::size_t k = 0; k < step.fixmatch_pseudo.size(); ++k)
                if (step.fixmatch_pseudo[k] >= 0 && step.fixmatch_pseudo[k] == truth_u[uidx[k]]) ++pass_hits;
            ++steps;
        }
        opt.epoch = epoch + 1;
        rec.loss_logits /= static_cast<double>(steps);
        rec.loss_margin /= static_cast<double>(steps);
        rec.loss_total /= static_cast<double>(steps);
        if (rec.pass_count > 0)
            rec.fixmatch_pseudo_acc = static_cast<double>(pass_hits) / static_cast<double>(rec.pass_count);

        const cluster::PrototypeBank* active = (offline_mode && bank) ? &*bank : nullptr;
        const auto acc = evaluate(model, active, test.features, test.true_labels);
        rec.param_acc = acc.param;
        rec.proto_acc = acc.proto;
        if (active != nullptr) {
            rec.bank_hash = bank->hash();
            rec.pseudo_hash = pseudo->hash();
            rec.active_coverage = pseudo->coverage;
            rec.active_pseudo_acc = active_pseudo_acc;
        }
        if (observer) observer(rec, model, active, pseudo ? &*pseudo : nullptr);
        metrics.epochs.push_back(std::move(rec));
    }

    const cluster::PrototypeBank* active = (offline_mode && bank) ? &*bank : nullptr;
    const auto acc = evaluate(model, active, test.features, test.true_labels);
    metrics.final_param_acc = acc.param;
    metrics.final_proto_acc = acc.proto;
    metrics.final_test_acc = acc.proto ? *acc.proto : acc.param;
    if (offline_mode) result.bank = bank;
    return result;
}

/// FixMatch-only run over the full epoch budget.
inline RunResult run_baseline_fixmatch(const data::FeatureDataset& train, const data::FeatureDataset& test,
                                       const RunConfig& cfg) {
    return run(train, test, cfg, Mode::fixmatch);
}

// ---- ablation grid ----------------------------------------------------------

struct AblationVariant {
    std::string name;
    Mode mode;
    std::function<void(RunConfig&)> apply;
};

inline std::vector<AblationVariant> ablation_variants() {
    auto sskm = [](bool la, bool sat, proto::View view) {
        return [=](RunConfig& c) {
            c.cluster.method = cluster::Method::semi_supervised;
            c.cluster.use_labeled_aug = la;
            c.cluster.use_adaptive_threshold = sat;
            c.margin.view = view;
        };
    };
    return {
        {"SSL", Mode::fixmatch, [](RunConfig&) {}},
        {"SSL+KM", Mode::aplt,
         [](RunConfig& c) {
             c.cluster.method = cluster::Method::plain_kmeans;
             c.cluster.use_labeled_aug = false;
             c.cluster.use_adaptive_threshold = false;
             c.margin.view = proto::View::strong;
         }},
        {"SSL+SSKM(W)", Mode::aplt, sskm(false, false, proto::View::weak)},
        {"SSL+SSKM(S)", Mode::aplt, sskm(false, false, proto::View::strong)},
        {"SSL+SSKM(S)+LA", Mode::aplt, sskm(true, false, proto::View::strong)},
        {"SSL+SSKM(S)+SAT", Mode::aplt, sskm(false, true, proto::View::strong)},
        {"SSL+SSKM(S)+LA+SAT", Mode::aplt, sskm(true, true, proto::View::strong)},
    };
}

struct AblationRow {
    std::string name;
    std::uint64_t seed = 0;
    double test_acc = 0.0;
    std::optional<double> proto_acc;
    double param_acc = 0.0;
    std::optional<double> final_coverage;
    std::optional<double> final_pseudo_acc;
};

/// Runs every ablation variant for one seed on prepared data.
inline std::vector<AblationRow> run_ablation_grid(const data::FeatureDataset& train,
                                                  const data::FeatureDataset& test, const RunConfig& base) {
    std::vector<AblationRow> rows;
    for (const auto& v : ablation_variants()) {
        RunConfig cfg = base;
        v.apply(cfg);
        const auto r = run(train, test, cfg, v.mode);
        AblationRow row;
        row.name = v.name;
        row.seed = cfg.seed;
        row.test_acc = r.metrics.final_test_acc;
        row.proto_acc = r.metrics.final_proto_acc;
        row.param_acc = r.metrics.final_param_acc;
        if (!r.metrics.offline.empty()) {
            row.final_coverage = r.metrics.offline.back().coverage;
            row.final_pseudo_acc = r.metrics.offline.back().pseudo_acc;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Same config with the per-seed fields replaced; the split follows the seed.
inline RunConfig with_seed(RunConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.split.seed = seed;
    return cfg;
}

}  // namespace aplt::engine
