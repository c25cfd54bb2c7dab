#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

// Small training runs: 4 classes, 8 dims, short schedule.
const std::string kFast =
    " --set data.classes=4 --set data.dim=8 --set data.n_per_class=30 --set model.hidden=16"
    " --set model.embed=8 --set schedule.warmup_epochs=2 --set schedule.main_epochs=3"
    " --set schedule.offline_every=2 --set fixmatch.batch_size=16 --set split.labeled_ratio=0.2";

class Cli : public ::testing::Test {
protected:
    fs::path root;

    void SetUp() override {
        root = fs::temp_directory_path() /
               ("aplt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    void TearDown() override { fs::remove_all(root); }

    int run(const std::string& args) {
        const std::string cmd = "APLT_OUTPUT_ROOT='" + root.string() + "' '" APLT_BIN "' " + args + " > '" +
                                (root / "stdout.txt").string() + "' 2> '" + (root / "stderr.txt").string() + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const fs::path& p) {
        std::ifstream f(p);
        std::stringstream s;
        s << f.rdbuf();
        return s.str();
    }
};

}  // namespace

TEST_F(Cli, GenIsReproducible) {
    ASSERT_EQ(run("gen --preset ma12 --seed 4 -o a.csv"), 0);
    ASSERT_EQ(run("gen --preset ma12 --seed 4 -o b.csv"), 0);
    const auto ma = nlohmann::json::parse(read(root / "a.csv.manifest.json"));
    const auto mb = nlohmann::json::parse(read(root / "b.csv.manifest.json"));
    EXPECT_EQ(ma["checksum_fnv1a"], mb["checksum_fnv1a"]);
    EXPECT_EQ(ma["classes"], 12);
    EXPECT_EQ(ma["rows"], 1200);
    EXPECT_EQ(read(root / "a.csv"), read(root / "b.csv"));
}

TEST_F(Cli, GenRejectsBadClassCount) {
    EXPECT_EQ(run("gen --classes 1 -o bad.csv"), 1);
    EXPECT_FALSE(fs::exists(root / "bad.csv"));
    EXPECT_NE(read(root / "stderr.txt").find("class count"), std::string::npos);
}

TEST_F(Cli, TrainBothModesAndOverrideEcho) {
    ASSERT_EQ(run("train --mode aplt" + kFast + " --set margin.lambda=0.5 -o ap"), 0) << read(root / "stderr.txt");
    for (const char* f : {"resolved_config.json", "metrics.ndjson", "summary.csv", "checkpoint.txt"})
        EXPECT_TRUE(fs::exists(root / "ap" / f)) << f;
    const auto cfg = nlohmann::json::parse(read(root / "ap" / "resolved_config.json"));
    EXPECT_EQ(cfg["margin"]["lambda"], 0.5);
    ASSERT_EQ(run("train --mode fixmatch" + kFast + " -o fm"), 0);
    EXPECT_NE(read(root / "fm" / "summary.csv").find("fixmatch,"), std::string::npos);
}

TEST_F(Cli, ConfigFileThenOverride) {
    std::ofstream(root / "c.json") << R"({"margin": {"lambda": 2.0}, "seed": 9})";
    ASSERT_EQ(run("train -c '" + (root / "c.json").string() + "'" + kFast + " --set margin.lambda=0.25 -o r"), 0);
    const auto cfg = nlohmann::json::parse(read(root / "r" / "resolved_config.json"));
    EXPECT_EQ(cfg["margin"]["lambda"], 0.25);
    EXPECT_EQ(cfg["seed"], 9);
}

TEST_F(Cli, ConfigErrorsLeaveNoOutput) {
    EXPECT_EQ(run("train --set margin.bogus=1 -o x"), 1);
    EXPECT_EQ(run("train --set fixmatch.tau=2 -o x"), 1);
    std::ofstream(root / "broken.json") << "{not json";
    EXPECT_EQ(run("train -c '" + (root / "broken.json").string() + "' -o x"), 1);
    EXPECT_EQ(run("train --mode nonsense -o x"), 1);
    EXPECT_FALSE(fs::exists(root / "x"));
}

TEST_F(Cli, MissingDatasetFails) {
    EXPECT_EQ(run("train --data '" + (root / "nope.csv").string() + "' -o y"), 1);
    EXPECT_FALSE(fs::exists(root / "y"));
}

TEST_F(Cli, TrainOnCsvThenEval) {
    ASSERT_EQ(run("gen --classes 4 --dim 8 --n-per-class 30 --overlap 0.2 --labeled-ratio 0.2 -o d.csv"), 0);
    ASSERT_EQ(run("train --data '" + (root / "d.csv").string() + "'" + kFast + " -o t"), 0)
        << read(root / "stderr.txt");
    ASSERT_EQ(run("eval --checkpoint '" + (root / "t" / "checkpoint.txt").string() + "' --data '" +
                  (root / "d.csv").string() + "'"),
              0);
    const auto j = nlohmann::json::parse(read(root / "stdout.txt"));
    EXPECT_EQ(j["rows"], 120);
    EXPECT_TRUE(j["proto_acc"].is_number());
}

TEST_F(Cli, CompareWritesTrajectory) {
    ASSERT_EQ(run("compare --seeds 2" + kFast + " -o cmp"), 0) << read(root / "stderr.txt");
    std::istringstream in(read(root / "cmp" / "trajectory.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "method,seed,epoch,phase,pseudo_source,coverage,pseudo_acc,test_acc");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 2u * 2u * 5u);  // methods x seeds x epochs
}

TEST_F(Cli, AblateAppendsUnlessForced) {
    auto lines = [&] {
        std::istringstream in(read(root / "abl" / "ablation.csv"));
        std::size_t n = 0;
        for (std::string line; std::getline(in, line);) ++n;
        return n;
    };
    ASSERT_EQ(run("ablate --seeds 1" + kFast + " -o abl"), 0) << read(root / "stderr.txt");
    EXPECT_EQ(lines(), 1u + 7u);
    ASSERT_EQ(run("ablate --seeds 1 --first-seed 1" + kFast + " -o abl"), 0);
    EXPECT_EQ(lines(), 1u + 14u);
    ASSERT_EQ(run("ablate --seeds 1 --force" + kFast + " -o abl"), 0);
    EXPECT_EQ(lines(), 1u + 7u);
    EXPECT_EQ(read(root / "abl" / "ablation.csv").rfind("row,seed,", 0), 0u);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("eval --checkpoint missing.txt --data missing.csv"), 1);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, RuntimeFailureExitsTwo) {
    EXPECT_EQ(run("train --mode fixmatch" + kFast + " --set optim.lr=1e200 -o boom"), 2);
}
