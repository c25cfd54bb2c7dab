#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "augment.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "nn.hpp"

namespace aplt::fixmatch {

struct FixMatchConfig {
    double tau = 0.95;
    std::size_t batch_size = 64;

    void validate() const {
        if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::invalid_parameter, "tau must lie in (0,1]");
        if (batch_size == 0) throw Error(ErrorKind::invalid_parameter, "batch_size must be positive");
    }
};

/// A loss value together with its parameter gradient.
struct BatchLoss {
    double value = 0.0;
    std::size_t pass_count = 0;
    nn::Gradients grads;
};

/// Loss terms expressed against one forward pass: per-batch value and
/// dL/dlogits rows, already divided by the batch size.
struct LogitTerms {
    double value = 0.0;
    std::size_t pass_count = 0;
    Matrix grad_logits;
    std::vector<int> targets;  // -1 where masked out
};

inline double log_sum_exp(std::span<const double> z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s);
}

/// Mean cross-entropy of `targets` against softmax(logits). Rows with a
/// negative target contribute nothing but still count in the denominator.
inline LogitTerms cross_entropy_terms(const Matrix& logits, std::span<const int> targets) {
    if (logits.rows() == 0) throw Error(ErrorKind::empty_batch, "cross-entropy on empty batch");
    if (targets.size() != logits.rows())
        throw Error(ErrorKind::dimension_mismatch, "targets/logits length differ");
    const std::size_t B = logits.rows();
    const double inv_b = 1.0 / static_cast<double>(B);
    LogitTerms t;
    t.grad_logits = Matrix(B, logits.cols());
    t.targets.assign(targets.begin(), targets.end());
    for (std::size_t r = 0; r < B; ++r) {
        const int y = targets[r];
        if (y < 0) continue;
        if (static_cast<std::size_t>(y) >= logits.cols())
            throw Error(ErrorKind::unknown_class, "target " + std::to_string(y));
        auto z = logits.row(r);
        const double lse = log_sum_exp(z);
        t.value += (lse - z[static_cast<std::size_t>(y)]) * inv_b;
        auto g = t.grad_logits.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) g[c] = std::exp(z[c] - lse) * inv_b;
        g[static_cast<std::size_t>(y)] -= inv_b;
        ++t.pass_count;
    }
    return t;
}

/// Confidence-masked pseudo-labels from weak-view probabilities.
inline std::vector<int> threshold_pseudo_labels(const Matrix& weak_probs, double tau) {
    std::vector<int> out(weak_probs.rows(), -1);
    for (std::size_t r = 0; r < weak_probs.rows(); ++r) {
        auto q = weak_probs.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < q.size(); ++c)
            if (q[c] > q[best]) best = c;
        if (q[best] >= tau) out[r] = static_cast<int>(best);
    }
    return out;
}

/// Unlabeled consistency terms: argmax of the weak view supervises the
/// strong view wherever the weak confidence reaches tau.
inline LogitTerms unlabeled_terms(const Matrix& weak_probs, const Matrix& strong_logits, double tau) {
    if (weak_probs.rows() == 0) throw Error(ErrorKind::empty_batch, "unlabeled loss on empty batch");
    if (!weak_probs.same_shape(strong_logits))
        throw Error(ErrorKind::dimension_mismatch, "weak/strong view shapes differ");
    const auto pseudo = threshold_pseudo_labels(weak_probs, tau);
    return cross_entropy_terms(strong_logits, pseudo);
}

inline BatchLoss to_batch_loss(const nn::EncoderModel& m, const nn::ForwardCache& cache,
                               LogitTerms terms) {
    BatchLoss out;
    out.value = terms.value;
    out.pass_count = terms.pass_count;
    out.grads = m.params.zeros_like();
    nn::backward(m, cache, terms.grad_logits, Matrix(), out.grads);
    return out;
}

/// Supervised term on an already weak-augmented labeled batch.
inline BatchLoss supervised_loss_on_view(const nn::EncoderModel& m, const Matrix& weak_view,
                                         std::span<const int> labels) {
    if (weak_view.rows() == 0) throw Error(ErrorKind::empty_batch, "empty labeled batch");
    const auto cache = nn::forward(m, weak_view);
    return to_batch_loss(m, cache, cross_entropy_terms(cache.logits, labels));
}

/// Unlabeled term on already augmented views. The weak view only yields
/// targets; no gradient flows through it.
inline BatchLoss unlabeled_loss_on_views(const nn::EncoderModel& m, const Matrix& weak_view,
                                         const Matrix& strong_view, const FixMatchConfig& cfg) {
    if (weak_view.rows() == 0) throw Error(ErrorKind::empty_batch, "empty unlabeled batch");
    const auto q = nn::forward_logits(m, weak_view);
    const auto cache = nn::forward(m, strong_view);
    return to_batch_loss(m, cache, unlabeled_terms(q, cache.logits, cfg.tau));
}

inline BatchLoss supervised_loss(const nn::EncoderModel& m, const Matrix& batch,
                                 std::span<const int> labels, const augment::AugmentConfig& aug,
                                 std::mt19937_64& rng) {
    if (batch.rows() == 0) throw Error(ErrorKind::empty_batch, "empty labeled batch");
    return supervised_loss_on_view(m, augment::weak_batch(batch, aug, rng), labels);
}

inline BatchLoss unlabeled_loss(const nn::EncoderModel& m, const Matrix& batch,
                                const FixMatchConfig& cfg, const augment::AugmentConfig& aug,
                                std::mt19937_64& rng) {
    if (batch.rows() == 0) throw Error(ErrorKind::empty_batch, "empty unlabeled batch");
    const auto weak_view = augment::weak_batch(batch, aug, rng);
    const auto strong_view = augment::strong_batch(batch, aug, rng);
    return unlabeled_loss_on_views(m, weak_view, strong_view, cfg);
}

/// Sum of two losses and their gradients. Used for the warm-up objective and
/// wherever two terms are added.
inline BatchLoss combine(const BatchLoss& a, const BatchLoss& b, double b_weight = 1.0) {
    BatchLoss out;
    out.value = a.value + b_weight * b.value;
    out.pass_count = a.pass_count + b.pass_count;
    out.grads = a.grads;
    if (out.grads.w1.empty()) out.grads = b.grads.zeros_like();
    if (!b.grads.w1.empty()) out.grads.add(b.grads, b_weight);
    return out;
}

inline BatchLoss warmup_objective(const BatchLoss& sup, const BatchLoss& unsup) {
    BatchLoss out = combine(sup, unsup);
    out.pass_count = unsup.pass_count;
    return out;
}

}  // namespace aplt::fixmatch
