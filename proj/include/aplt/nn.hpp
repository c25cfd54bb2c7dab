#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>

#include "error.hpp"
#include "matrix.hpp"

namespace aplt::nn {

struct ModelShape {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 32;
    std::size_t num_classes = 0;
    bool feature_norm = true;

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// All trainable tensors of the encoder and head. Biases are column vectors.
/// Also used for gradients and momentum buffers.
struct ParamSet {
    Matrix w1, b1;  // hidden: input -> hidden
    Matrix w2, b2;  // encoder output: hidden -> embed
    Matrix wh, bh;  // parametric head: embed -> classes

    static constexpr std::array<const char*, 6> names{"w1", "b1", "w2", "b2", "wh", "bh"};

    std::array<Matrix*, 6> tensors() noexcept { return {&w1, &b1, &w2, &b2, &wh, &bh}; }
    std::array<const Matrix*, 6> tensors() const noexcept { return {&w1, &b1, &w2, &b2, &wh, &bh}; }

    static ParamSet zeros(const ModelShape& s) {
        ParamSet p;
        p.w1 = Matrix(s.hidden_dim, s.input_dim);
        p.b1 = Matrix(s.hidden_dim, 1);
        p.w2 = Matrix(s.embed_dim, s.hidden_dim);
        p.b2 = Matrix(s.embed_dim, 1);
        p.wh = Matrix(s.num_classes, s.embed_dim);
        p.bh = Matrix(s.num_classes, 1);
        return p;
    }

    ParamSet zeros_like() const {
        ParamSet p;
        auto dst = p.tensors();
        auto src = tensors();
        for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = Matrix(src[i]->rows(), src[i]->cols());
        return p;
    }

    /// this += scale * other
    void add(const ParamSet& other, double scale = 1.0) {
        auto dst = tensors();
        auto src = other.tensors();
        for (std::size_t t = 0; t < dst.size(); ++t) {
            if (!dst[t]->same_shape(*src[t]))
                throw Error(ErrorKind::dimension_mismatch, std::string("parameter ") + names[t]);
            auto& dv = dst[t]->values();
            const auto& sv = src[t]->values();
            for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += scale * sv[i];
        }
    }

    void scale(double s) {
        for (auto* t : tensors())
            for (double& v : t->values()) v *= s;
    }

    bool all_finite() const {
        for (const auto* t : tensors())
            if (!aplt::all_finite(t->values())) return false;
        return true;
    }

    std::uint64_t hash() const {
        Fnv1a h;
        for (const auto* t : tensors()) h.add(*t);
        return h.value();
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

using Gradients = ParamSet;

/// One-hidden-layer MLP encoder (ReLU after the hidden layer, linear output,
/// optional L2 normalization) followed by a linear softmax head.
struct EncoderModel {
    ModelShape shape;
    ParamSet params;

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

inline EncoderModel init_model(const ModelShape& shape, std::mt19937_64& rng) {
    if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.embed_dim == 0 || shape.num_classes == 0)
        throw Error(ErrorKind::invalid_parameter, "model dimensions must be positive");
    EncoderModel m{shape, ParamSet::zeros(shape)};
    auto fill = [&](Matrix& w, double scale) {
        std::normal_distribution<double> g(0.0, scale);
        for (double& v : w.values()) v = g(rng);
    };
    fill(m.params.w1, std::sqrt(2.0 / static_cast<double>(shape.input_dim)));
    fill(m.params.w2, std::sqrt(2.0 / static_cast<double>(shape.hidden_dim)));
    fill(m.params.wh, std::sqrt(1.0 / static_cast<double>(shape.embed_dim)));
    return m;
}

/// Intermediate activations of one forward pass, kept for backward().
struct ForwardCache {
    Matrix input;
    Matrix hidden_pre;   // W1 x + b1
    Matrix hidden;       // relu
    Matrix embed_raw;    // W2 h + b2
    std::vector<double> embed_norm;
    Matrix features;     // embed_raw, unit-normalized when feature_norm
    Matrix logits;
    Matrix probs;
};

inline void softmax_rows(const Matrix& logits, Matrix& probs) {
    probs = Matrix(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        auto p = probs.row(r);
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double s = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            p[c] = std::exp(z[c] - mx);
            s += p[c];
        }
        for (double& v : p) v /= s;
    }
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix p;
    softmax_rows(logits, p);
    return p;
}

namespace detail {

// out(r, :) = W * in(r, :) + b
inline void affine(const Matrix& in, const Matrix& w, const Matrix& b, Matrix& out) {
    out = Matrix(in.rows(), w.rows());
    for (std::size_t r = 0; r < in.rows(); ++r) {
        auto x = in.row(r);
        auto y = out.row(r);
        for (std::size_t o = 0; o < w.rows(); ++o) y[o] = dot(w.row(o), x) + b(o, 0);
    }
}

}  // namespace detail

inline ForwardCache forward(const EncoderModel& m, const Matrix& x) {
    if (x.cols() != m.shape.input_dim)
        throw Error(ErrorKind::dimension_mismatch,
                    "input has " + std::to_string(x.cols()) + " columns, model expects " +
                        std::to_string(m.shape.input_dim));
    ForwardCache c;
    c.input = x;
    detail::affine(x, m.params.w1, m.params.b1, c.hidden_pre);
    c.hidden = c.hidden_pre;
    for (double& v : c.hidden.values()) v = v > 0.0 ? v : 0.0;
    detail::affine(c.hidden, m.params.w2, m.params.b2, c.embed_raw);
    c.features = c.embed_raw;
    c.embed_norm.assign(x.rows(), 1.0);
    if (m.shape.feature_norm) {
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double n = norm2(c.embed_raw.row(r));
            c.embed_norm[r] = n;
            if (n > 0.0)
                for (double& v : c.features.row(r)) v /= n;
        }
    }
    detail::affine(c.features, m.params.wh, m.params.bh, c.logits);
    softmax_rows(c.logits, c.probs);
    return c;
}

inline Matrix forward_features(const EncoderModel& m, const Matrix& x) { return forward(m, x).features; }

inline Matrix forward_logits(const EncoderModel& m, const Matrix& x) { return forward(m, x).probs; }

/// Accumulates parameter gradients into `grads`. `grad_logits` is dL/d(head
/// output before softmax); `grad_features` is dL/d(features) arriving from
/// outside the head (margin losses). Either may be empty.
inline void backward(const EncoderModel& m, const ForwardCache& c, const Matrix& grad_logits,
                     const Matrix& grad_features, Gradients& grads) {
    const std::size_t B = c.input.rows();
    const std::size_t e = m.shape.embed_dim;
    const std::size_t C = m.shape.num_classes;
    const std::size_t H = m.shape.hidden_dim;
    const std::size_t d = m.shape.input_dim;
    const bool has_logits = !grad_logits.empty();
    const bool has_features = !grad_features.empty();
    if (has_logits && (grad_logits.rows() != B || grad_logits.cols() != C))
        throw Error(ErrorKind::dimension_mismatch, "backward: logits gradient shape");
    if (has_features && (grad_features.rows() != B || grad_features.cols() != e))
        throw Error(ErrorKind::dimension_mismatch, "backward: feature gradient shape");
    if (!grads.w1.same_shape(m.params.w1) || !grads.wh.same_shape(m.params.wh))
        throw Error(ErrorKind::dimension_mismatch, "backward: gradient buffers");
    if (!has_logits && !has_features) return;

    std::vector<double> gf(e), gz(e), ga(H);
    for (std::size_t r = 0; r < B; ++r) {
        std::fill(gf.begin(), gf.end(), 0.0);
        auto f = c.features.row(r);
        if (has_logits) {
            auto gl = grad_logits.row(r);
            for (std::size_t k = 0; k < C; ++k) {
                const double g = gl[k];
                if (g == 0.0) continue;
                grads.bh(k, 0) += g;
                auto wrow = m.params.wh.row(k);
                auto grow = grads.wh.row(k);
                for (std::size_t j = 0; j < e; ++j) {
                    grow[j] += g * f[j];
                    gf[j] += g * wrow[j];
                }
            }
        }
        if (has_features) {
            auto gx = grad_features.row(r);
            for (std::size_t j = 0; j < e; ++j) gf[j] += gx[j];
        }

        if (m.shape.feature_norm && c.embed_norm[r] > 0.0) {
            const double fg = dot(f, gf);
            for (std::size_t j = 0; j < e; ++j) gz[j] = (gf[j] - f[j] * fg) / c.embed_norm[r];
        } else {
            gz = gf;
        }

        auto h = c.hidden.row(r);
        std::fill(ga.begin(), ga.end(), 0.0);
        for (std::size_t j = 0; j < e; ++j) {
            const double g = gz[j];
            if (g == 0.0) continue;
            grads.b2(j, 0) += g;
            auto wrow = m.params.w2.row(j);
            auto grow = grads.w2.row(j);
            for (std::size_t k = 0; k < H; ++k) {
                grow[k] += g * h[k];
                ga[k] += g * wrow[k];
            }
        }

        auto pre = c.hidden_pre.row(r);
        auto x = c.input.row(r);
        for (std::size_t k = 0; k < H; ++k) {
            if (pre[k] <= 0.0) continue;
            const double g = ga[k];
            grads.b1(k, 0) += g;
            auto grow = grads.w1.row(k);
            for (std::size_t i = 0; i < d; ++i) grow[i] += g * x[i];
        }
    }
}

struct OptimizerState {
    ParamSet velocity;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double base_lr = 0.002;
    std::size_t step = 0;
    std::size_t epoch = 0;

    static OptimizerState for_model(const EncoderModel& m) {
        OptimizerState s;
        s.velocity = m.params.zeros_like();
        return s;
    }
};

/// Classic SGD with momentum and coupled weight decay:
/// v <- momentum * v + g + decay * theta;  theta <- theta - lr * v.
inline void sgd_update(std::span<double> theta, std::span<double> velocity,
                       std::span<const double> grad, double lr, double momentum,
                       double weight_decay) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * theta[i];
        theta[i] -= lr * velocity[i];
    }
}

inline void sgd_step(EncoderModel& m, OptimizerState& state, const Gradients& grads, double lr) {
    if (!grads.all_finite()) throw Error(ErrorKind::nonfinite, "nonfinite gradient, aborting run");
    auto params = m.params.tensors();
    auto vel = state.velocity.tensors();
    auto g = grads.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!params[t]->same_shape(*g[t]) || !params[t]->same_shape(*vel[t]))
            throw Error(ErrorKind::dimension_mismatch, std::string("sgd_step: ") + ParamSet::names[t]);
        sgd_update(params[t]->values(), vel[t]->values(), g[t]->values(), lr, state.momentum,
                   state.weight_decay);
    }
    ++state.step;
}

inline double cosine_lr(double epoch, double total_epochs, double base) {
    if (total_epochs <= 0.0) return base;
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

}  // namespace aplt::nn
