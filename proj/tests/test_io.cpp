#include <gtest/gtest.h>

#include <sstream>

#include "aplt/aplt.hpp"
#include "fixtures.hpp"

using namespace aplt;
using nlohmann::ordered_json;

TEST(Config, DefaultsRoundTrip) {
    const auto cfg = config::from_json(config::defaults());
    EXPECT_EQ(cfg.optim.lr, 0.002);
    EXPECT_EQ(cfg.fixmatch.tau, 0.95);
    EXPECT_EQ(cfg.schedule.warmup_epochs, 15u);
    EXPECT_EQ(config::to_json(cfg), config::defaults());
}

TEST(Config, UnknownKeysAndBadTypesRejected) {
    auto kind = [](const ordered_json& j) {
        try {
            config::from_json(config::resolve(j));
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::io_error;
    };
    EXPECT_EQ(kind(ordered_json::parse(R"({"bogus": 1})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"margin": {"lamda": 1}})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"margin": {"lambda": "big"}})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"fixmatch": {"batch_size": 1.5}})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"fixmatch": {"tau": 1.5}})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"cluster": {"method": "dbscan"}})")), ErrorKind::config_error);
    EXPECT_EQ(kind(ordered_json::parse(R"({"schedule": {"offline_every": 0}})")), ErrorKind::config_error);
}

TEST(Config, OverridesAndPresets) {
    auto j = config::resolve(config::preset("hard"));
    config::apply_override(j, "margin.lambda=0.5");
    config::apply_override(j, "margin.view=weak");
    const auto cfg = config::from_json(j);
    EXPECT_EQ(cfg.margin.lambda, 0.5);
    EXPECT_EQ(cfg.margin.view, proto::View::weak);
    EXPECT_EQ(cfg.data.overlap, 0.30);
    EXPECT_EQ(cfg.optim.lr, 0.1);
    EXPECT_THROW(config::apply_override(j, "margin.lambda"), Error);
    EXPECT_THROW(config::apply_override(j, "nope.x=1"), Error);
    EXPECT_THROW(config::preset("nope"), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    const auto m = nn::init_model({5, 7, 4, 3, true}, rng);
    cluster::PrototypeBank bank;
    bank.prototypes = Matrix(3, 4);
    for (double& v : bank.prototypes.values()) v = std::normal_distribution<double>()(rng);
    bank.counts = {4, 0, 9};
    bank.build_epoch = 45;
    std::stringstream s;
    checkpoint::write(s, m, &bank);
    const auto ck = checkpoint::read(s);
    EXPECT_EQ(ck.model, m);
    ASSERT_TRUE(ck.bank.has_value());
    EXPECT_EQ(*ck.bank, bank);

    std::stringstream t;
    checkpoint::write(t, m, nullptr);
    EXPECT_FALSE(checkpoint::read(t).bank.has_value());
}

TEST(Checkpoint, CorruptInputRejected) {
    std::istringstream a("aplt-checkpoint 2\n");
    EXPECT_THROW(checkpoint::read(a), Error);
    std::mt19937_64 rng(2);
    std::stringstream s;
    checkpoint::write(s, nn::init_model({2, 2, 2, 2, true}, rng), nullptr);
    std::string text = s.str();
    text.replace(text.find("tensor b1 2 1"), 13, "tensor b1 3 1");
    std::istringstream b(text);
    EXPECT_THROW(checkpoint::read(b), Error);
}

TEST(Metrics, NdjsonOrderingAndSchema) {
    engine::RunMetrics m;
    m.mode = "aplt";
    for (std::size_t e = 0; e < 3; ++e) {
        engine::EpochRecord r;
        r.epoch = e;
        r.phase = e == 0 ? "warmup" : "main";
        m.epochs.push_back(r);
    }
    engine::OfflineRecord o;
    o.epoch = 1;
    m.offline.push_back(o);
    const auto text = metrics::to_ndjson(m);
    std::istringstream in(text);
    std::vector<std::string> types;
    for (std::string line; std::getline(in, line);) types.push_back(ordered_json::parse(line)["type"]);
    EXPECT_EQ(types, (std::vector<std::string>{"epoch", "offline", "epoch", "epoch", "final"}));
}

TEST(Metrics, SummaryRow) {
    engine::RunMetrics m;
    m.mode = "fixmatch";
    m.seed = 3;
    m.final_test_acc = m.final_param_acc = 0.5;
    EXPECT_EQ(metrics::summary_csv_row(m), "fixmatch,3,0.5,,0.5,0,,\n");
}
