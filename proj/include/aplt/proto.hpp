#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cluster.hpp"
#include "error.hpp"
#include "fixmatch.hpp"
#include "matrix.hpp"
#include "nn.hpp"

namespace aplt::proto {

enum class View { strong, weak };

struct MarginConfig {
    double temperature = 0.1;  // 1.0 gives plain dot-product logits
    double lambda = 1.0;
    View view = View::strong;

    void validate() const {
        if (!(temperature > 0.0)) throw Error(ErrorKind::invalid_parameter, "temperature must be > 0");
        if (!(lambda >= 0.0)) throw Error(ErrorKind::invalid_parameter, "lambda must be >= 0");
    }
};

/// Loss value with dL/dF for a batch of features. Prototypes have no
/// gradient slot.
struct FeatureLoss {
    double value = 0.0;
    std::size_t count = 0;
    Matrix grad_features;
};

inline void check_dims(const cluster::PrototypeBank& bank, const Matrix& features) {
    if (features.cols() != bank.prototypes.cols())
        throw Error(ErrorKind::dimension_mismatch,
                    "features have " + std::to_string(features.cols()) + " dims, prototypes " +
                        std::to_string(bank.prototypes.cols()));
}

/// argmax_c F . rho_c, ties to the lowest class index.
inline std::vector<int> predict(const cluster::PrototypeBank& bank, const Matrix& features) {
    check_dims(bank, features);
    std::vector<int> out(features.rows(), 0);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        auto f = features.row(r);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < bank.num_classes(); ++c) {
            const double s = dot(f, bank.prototypes.row(c));
            if (s > best) {
                best = s;
                out[r] = static_cast<int>(c);
            }
        }
    }
    return out;
}

/// Softmax cross-entropy over similarities F . rho_c / T. Rows with a
/// negative target add nothing; the mean is over all rows.
inline FeatureLoss margin_terms(const cluster::PrototypeBank& bank, const Matrix& features,
                                std::span<const int> targets, double temperature) {
    check_dims(bank, features);
    if (targets.size() != features.rows())
        throw Error(ErrorKind::dimension_mismatch, "targets/features length differ");
    const std::size_t B = features.rows();
    const std::size_t C = bank.num_classes();
    FeatureLoss out;
    out.grad_features = Matrix(B, features.cols());
    if (B == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<double> s(C);
    for (std::size_t r = 0; r < B; ++r) {
        const int y = targets[r];
        if (y < 0) continue;
        auto f = features.row(r);
        for (std::size_t c = 0; c < C; ++c) s[c] = dot(f, bank.prototypes.row(c)) / temperature;
        const double lse = fixmatch::log_sum_exp(s);
        out.value += (lse - s[static_cast<std::size_t>(y)]) * inv_b;
        auto g = out.grad_features.row(r);
        for (std::size_t c = 0; c < C; ++c) {
            double w = std::exp(s[c] - lse);
            if (static_cast<int>(c) == y) w -= 1.0;
            w *= inv_b / temperature;
            auto rho = bank.prototypes.row(c);
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += w * rho[k];
        }
        ++out.count;
    }
    return out;
}

inline FeatureLoss margin_loss_labeled(const cluster::PrototypeBank& bank, const Matrix& features,
                                       std::span<const int> labels, const MarginConfig& cfg) {
    if (features.rows() == 0) throw Error(ErrorKind::empty_batch, "empty labeled batch");
    return margin_terms(bank, features, labels, cfg.temperature);
}

/// `pseudo_labels[i]` is -1 for samples outside the kept pseudo-label set.
inline FeatureLoss margin_loss_unlabeled(const cluster::PrototypeBank& bank, const Matrix& features,
                                         std::span<const int> pseudo_labels, const MarginConfig& cfg) {
    return margin_terms(bank, features, pseudo_labels, cfg.temperature);
}

inline fixmatch::BatchLoss to_batch_loss(const nn::EncoderModel& m, const nn::ForwardCache& cache,
                                         const FeatureLoss& loss) {
    fixmatch::BatchLoss out;
    out.value = loss.value;
    out.pass_count = loss.count;
    out.grads = m.params.zeros_like();
    nn::backward(m, cache, Matrix(), loss.grad_features, out.grads);
    return out;
}

inline fixmatch::BatchLoss total_margin(const fixmatch::BatchLoss& sup, const fixmatch::BatchLoss& unsup) {
    return fixmatch::combine(sup, unsup);
}

}  // namespace aplt::proto
