#include <gtest/gtest.h>

#include <cmath>

#include "aplt/aplt.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace aplt;

TEST(Forward, IdentityEncoderReturnsInput) {
    nn::ModelShape s{3, 3, 3, 2, false};
    nn::EncoderModel m{s, nn::ParamSet::zeros(s)};
    for (std::size_t i = 0; i < 3; ++i) {
        m.params.w1(i, i) = 1.0;
        m.params.w2(i, i) = 1.0;
    }
    Matrix x(2, 3);
    x.values() = {0.5, 1.0, 2.0, 0.0, 3.0, 0.25};
    EXPECT_EQ(nn::forward_features(m, x), x);
}

TEST(Forward, FeaturesAreUnitLength) {
    std::mt19937_64 rng(1);
    const auto m = nn::init_model({6, 10, 5, 3, true}, rng);
    const auto f = nn::forward_features(m, oracle::random_matrix(20, 6, rng));
    for (std::size_t r = 0; r < f.rows(); ++r) EXPECT_NEAR(norm2(f.row(r)), 1.0, 1e-6);
}

TEST(Forward, MatchesHandRolledOracle) {
    std::mt19937_64 rng(2);
    for (bool norm : {true, false}) {
        auto m = nn::init_model({5, 7, 4, 3, norm}, rng);
        for (double& v : m.params.b1.values()) v = 0.1;
        const auto x = oracle::random_matrix(6, 5, rng);
        const auto c = nn::forward(m, x);
        const auto o = oracle::forward(m, x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(c.features(r, j), o.features[r][j], 1e-12);
            for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(c.logits(r, k), o.logits[r][k], 1e-12);
        }
    }
}

TEST(Softmax, HandValues) {
    Matrix z(3, 3);
    z.values() = {0, 0, 0, 4.2, 4.2, 4.2, 1, 0, -1e9};
    const auto p = nn::softmax_rows(z);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(p(0, c), 1.0 / 3.0, 1e-15);
        EXPECT_NEAR(p(1, c), 1.0 / 3.0, 1e-15);
    }
    const double e = std::exp(1.0);
    EXPECT_NEAR(p(2, 0), e / (e + 1), 1e-12);
    EXPECT_NEAR(p(2, 1), 1 / (e + 1), 1e-12);
    EXPECT_NEAR(p(2, 0), 0.7311, 1e-4);
}

TEST(Softmax, ZeroHeadIsUniform) {
    std::mt19937_64 rng(3);
    auto m = nn::init_model({4, 5, 3, 6, true}, rng);
    m.params.wh.fill(0.0);
    const auto c = nn::forward(m, oracle::random_matrix(4, 4, rng));
    for (double p : c.probs.values()) EXPECT_NEAR(p, 1.0 / 6.0, 1e-15);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(4);
    const auto m = nn::init_model({4, 5, 3, 2, true}, rng);
    const auto c = nn::forward(m, oracle::random_matrix(3, 4, rng));
    auto g = m.params.zeros_like();
    nn::backward(m, c, Matrix(3, 2), Matrix(3, 3), g);
    EXPECT_EQ(g, m.params.zeros_like());
}

TEST(Backward, FiniteDifferenceOnSpecShape) {
    // d=5, h=7, e=4, C=3 with cross-entropy on the head.
    std::mt19937_64 rng(5);
    auto m = nn::init_model({5, 7, 4, 3, true}, rng);
    oracle::StepProblem p;
    p.batch.labeled_weak = oracle::random_matrix(4, 5, rng);
    p.batch.labels = {0, 2, 1, 2};
    const auto analytic = fixmatch::supervised_loss_on_view(m, p.batch.labeled_weak, p.batch.labels);
    const auto rep = oracle::finite_difference(m, analytic.grads, p);
    EXPECT_GT(rep.checked, 0u);
    EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Backward, DuplicateSampleDoublesContribution) {
    std::mt19937_64 rng(6);
    const auto m = nn::init_model({4, 6, 3, 3, true}, rng);
    const auto x = oracle::random_matrix(1, 4, rng);
    Matrix xx(0, 4);
    xx.append_row(x.row(0));
    xx.append_row(x.row(0));
    const auto c1 = nn::forward(m, x);
    const auto c2 = nn::forward(m, xx);
    Matrix g1(1, 3), g2(2, 3);
    g1.values() = {0.3, -0.1, 0.2};
    g2.values() = {0.3, -0.1, 0.2, 0.3, -0.1, 0.2};
    auto a = m.params.zeros_like(), b = m.params.zeros_like();
    nn::backward(m, c1, g1, Matrix(), a);
    nn::backward(m, c2, g2, Matrix(), b);
    a.scale(2.0);
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    for (std::size_t t = 0; t < ta.size(); ++t)
        for (std::size_t i = 0; i < ta[t]->size(); ++i) EXPECT_NEAR(ta[t]->values()[i], tb[t]->values()[i], 1e-14);
}

TEST(Sgd, HandEvaluatedMomentum) {
    std::vector<double> theta{1.0}, v{0.0};
    const std::vector<double> g{1.0};
    nn::sgd_update(theta, v, g, 0.1, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_DOUBLE_EQ(theta[0], 0.9);
    nn::sgd_update(theta, v, g, 0.1, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(v[0], 1.9);
    EXPECT_NEAR(theta[0], 0.71, 1e-15);
}

TEST(Sgd, ZeroGradientZeroDecayIsNoOp) {
    std::mt19937_64 rng(7);
    auto m = nn::init_model({3, 4, 2, 2, true}, rng);
    const auto before = m;
    auto st = nn::OptimizerState::for_model(m);
    st.weight_decay = 0.0;
    nn::sgd_step(m, st, m.params.zeros_like(), 0.5);
    EXPECT_EQ(m, before);
}

TEST(Sgd, NonfiniteGradientAborts) {
    std::mt19937_64 rng(8);
    auto m = nn::init_model({3, 4, 2, 2, true}, rng);
    auto st = nn::OptimizerState::for_model(m);
    auto g = m.params.zeros_like();
    g.b2(0, 0) = std::nan("");
    try {
        nn::sgd_step(m, st, g, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::nonfinite);
    }
}

TEST(Sgd, DeterministicTraining) {
    auto train = [] {
        std::mt19937_64 rng(9);
        auto m = nn::init_model({4, 6, 3, 3, true}, rng);
        auto st = nn::OptimizerState::for_model(m);
        const auto x = oracle::random_matrix(8, 4, rng);
        const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
        for (int s = 0; s < 20; ++s) nn::sgd_step(m, st, fixmatch::supervised_loss_on_view(m, x, y).grads, 0.05);
        return m;
    };
    EXPECT_EQ(train(), train());
}

TEST(Cosine, HandValues) {
    EXPECT_DOUBLE_EQ(nn::cosine_lr(0, 55, 0.002), 0.002);
    EXPECT_NEAR(nn::cosine_lr(55, 55, 0.002), 0.0, 1e-18);
    EXPECT_NEAR(nn::cosine_lr(27.5, 55, 0.002), 0.001, 1e-15);
}
