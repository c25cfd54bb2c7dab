#pragma once

#include <memory>
#include <random>

#include "aplt/aplt.hpp"
#include "oracles.hpp"

namespace fixtures {

/// A random model, a random step batch and a random prototype bank, with the
/// analytic gradient and the oracle problem describing the same objective.
struct GradientCase {
    aplt::nn::EncoderModel model;
    aplt::cluster::PrototypeBank bank;
    oracle::StepProblem problem;
    aplt::engine::StepOutcome analytic;
};

inline std::unique_ptr<GradientCase> gradient_case(std::uint64_t seed, double lambda = 1.0,
                                                   double temperature = 0.1, bool strong = true,
                                                   bool feature_norm = true) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(3, 6), classes(2, 4), rows(2, 5);
    aplt::nn::ModelShape shape{dim(rng), dim(rng) + 2, dim(rng), classes(rng), feature_norm};
    auto c = std::make_unique<GradientCase>();
    c->model = aplt::nn::init_model(shape, rng);
    // Non-zero biases so every parameter has a generic gradient.
    for (auto* t : {&c->model.params.b1, &c->model.params.b2, &c->model.params.bh})
        for (double& v : t->values()) v = std::normal_distribution<double>(0.0, 0.3)(rng);
    c->bank.prototypes = oracle::random_unit_rows(shape.num_classes, shape.embed_dim, rng);
    c->bank.counts.assign(shape.num_classes, 1);

    const std::size_t nl = rows(rng), nu = rows(rng);
    std::uniform_int_distribution<int> label(0, static_cast<int>(shape.num_classes) - 1);
    auto& b = c->problem.batch;
    b.labeled_weak = oracle::random_matrix(nl, shape.input_dim, rng);
    b.labeled_strong = oracle::random_matrix(nl, shape.input_dim, rng);
    b.unlabeled_weak = oracle::random_matrix(nu, shape.input_dim, rng);
    b.unlabeled_strong = oracle::random_matrix(nu, shape.input_dim, rng);
    for (std::size_t i = 0; i < nl; ++i) b.labels.push_back(label(rng));
    std::bernoulli_distribution keep(0.6);
    for (std::size_t i = 0; i < nu; ++i) b.unlabeled_targets.push_back(keep(rng) ? label(rng) : -1);

    // A low tau so that some unlabeled rows pass the confidence test.
    aplt::fixmatch::FixMatchConfig fm;
    fm.tau = 1.0 / static_cast<double>(shape.num_classes) + 0.05;
    aplt::proto::MarginConfig mc;
    mc.lambda = lambda;
    mc.temperature = temperature;
    mc.view = strong ? aplt::proto::View::strong : aplt::proto::View::weak;

    c->problem.fixmatch_targets = oracle::fixmatch_targets(oracle::forward(c->model, b.unlabeled_weak).logits, fm.tau);
    c->problem.bank = &c->bank;
    c->problem.temperature = temperature;
    c->problem.lambda = lambda;
    c->problem.strong_margin = strong;
    c->analytic = aplt::engine::compute_step(c->model, b, &c->bank, fm, mc);
    return c;
}

/// Small engine config for fast end-to-end tests.
inline aplt::engine::RunConfig small_config() {
    aplt::engine::RunConfig cfg;
    cfg.data.classes = 4;
    cfg.data.dim = 8;
    cfg.data.n_per_class = 40;
    cfg.data.overlap = 0.3;
    cfg.split.labeled_ratio = 0.2;
    cfg.model.hidden = 16;
    cfg.model.embed = 8;
    cfg.fixmatch.batch_size = 16;
    cfg.fixmatch.tau = 0.9;
    cfg.optim.lr = 0.1;
    cfg.schedule.warmup_epochs = 3;
    cfg.schedule.main_epochs = 8;
    cfg.schedule.offline_every = 3;
    return cfg;
}

/// The calibrated hard synthetic benchmark: C=12, d=32, overlap 0.30, 10%
/// labels, with the "hard" preset's optimizer settings.
inline aplt::engine::RunConfig hard_benchmark() {
    return aplt::config::from_json(aplt::config::resolve(aplt::config::preset("hard")));
}

}  // namespace fixtures
