#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "aplt/aplt.hpp"

using namespace aplt;

namespace {

std::vector<std::size_t> all_rows(const data::FeatureDataset& ds) {
    std::vector<std::size_t> r(ds.size());
    std::iota(r.begin(), r.end(), 0);
    return r;
}

}  // namespace

TEST(Synthetic, ZeroNoiseIsSeparable) {
    const auto ds = data::generate_synthetic(2, 2, 10, 0.0, 7);
    ASSERT_EQ(ds.size(), 20u);
    const auto rows = all_rows(ds);
    EXPECT_DOUBLE_EQ(data::nearest_mean_accuracy(ds, rows, rows), 1.0);
}

TEST(Synthetic, Ma12ShapeIsNeitherTrivialNorChance) {
    const auto ds = data::generate_synthetic(12, 32, 100, 0.35, 1);
    ASSERT_EQ(ds.size(), 1200u);
    const auto rows = all_rows(ds);
    const double acc = data::nearest_mean_accuracy(ds, rows, rows);
    EXPECT_LT(acc, 1.0);
    EXPECT_GT(acc, 1.0 / 12.0);
}

TEST(Synthetic, ClassMeansSitAtUnitSeparation) {
    // Noise-free rows are the class means themselves.
    for (auto [C, d] : {std::pair{5, 8}, std::pair{12, 32}, std::pair{6, 3}}) {
        const auto ds = data::generate_synthetic(C, d, 4, 0.0, 11);
        double min_dist = 1e9;
        for (int a = 0; a < C; ++a)
            for (int b = a + 1; b < C; ++b)
                min_dist = std::min(min_dist, std::sqrt(squared_distance(ds.features.row(4 * a),
                                                                         ds.features.row(4 * b))));
        EXPECT_NEAR(min_dist, 1.0, 1e-12) << "C=" << C << " d=" << d;
    }
}

TEST(Synthetic, RejectsBadParameters) {
    EXPECT_THROW(data::generate_synthetic(1, 4, 10, 0.1, 0), Error);
    EXPECT_THROW(data::generate_synthetic(3, 1, 10, 0.1, 0), Error);
    EXPECT_THROW(data::generate_synthetic(3, 4, 2, 0.1, 0), Error);
    EXPECT_THROW(data::generate_synthetic(3, 4, 10, -0.1, 0), Error);
}

TEST(Split, StratifiedArithmetic) {
    const auto ds = data::apply_split(data::generate_synthetic(2, 2, 10, 0.1, 1), {0.5, 3, true});
    std::vector<int> per_class(2, 0);
    for (auto i : ds.labeled_indices()) ++per_class[static_cast<std::size_t>(ds.true_labels[i])];
    EXPECT_EQ(per_class, (std::vector<int>{5, 5}));
}

TEST(Split, FloorKeepsOneLabeledPerClass) {
    const auto small = data::apply_split(data::generate_synthetic(3, 2, 5, 0.1, 3), {0.2, 9, true});
    EXPECT_NO_THROW(data::validate_for_training(small));
    const auto ma12 = data::apply_split(data::generate_synthetic(12, 32, 100, 0.35, 1), {0.1, 0, true});
    EXPECT_NO_THROW(data::validate_for_training(ma12));
    EXPECT_EQ(ma12.labeled_indices().size(), 120u);
}

TEST(Split, Deterministic) {
    const auto ds = data::generate_synthetic(4, 3, 20, 0.2, 2);
    EXPECT_EQ(data::apply_split(ds, {0.3, 5, true}).labeled_mask, data::apply_split(ds, {0.3, 5, true}).labeled_mask);
    EXPECT_NE(data::apply_split(ds, {0.3, 5, true}).labeled_mask, data::apply_split(ds, {0.3, 6, true}).labeled_mask);
}

TEST(Split, RandomSplitCanMissAClass) {
    auto ds = data::generate_synthetic(6, 2, 4, 0.1, 2);
    bool threw = false;
    for (std::uint64_t s = 0; s < 50 && !threw; ++s) {
        try {
            data::apply_split(ds, {0.1, s, false});
        } catch (const Error& e) {
            threw = e.kind() == ErrorKind::ratio_too_small;
        }
    }
    EXPECT_TRUE(threw);
    EXPECT_THROW(data::apply_split(ds, {0.0, 0, true}), Error);
}

TEST(Holdout, StratifiedAndDisjoint) {
    const auto ds = data::generate_synthetic(4, 3, 50, 0.2, 2);
    const auto [train, test] = data::holdout_test(ds, 0.2, 1);
    EXPECT_EQ(test.size(), 40u);
    EXPECT_EQ(train.size(), 160u);
    std::vector<int> per_class(4, 0);
    for (int y : test.true_labels) ++per_class[static_cast<std::size_t>(y)];
    EXPECT_EQ(per_class, (std::vector<int>{10, 10, 10, 10}));
    EXPECT_TRUE(std::none_of(test.labeled_mask.begin(), test.labeled_mask.end(), [](bool b) { return b; }));
}

TEST(Holdout, PreSplitDataOnlyLosesUnlabeledRows) {
    const auto ds = data::apply_split(data::generate_synthetic(3, 3, 30, 0.2, 2), {0.2, 1, true});
    const auto [train, test] = data::holdout_test(ds, 0.25, 1);
    EXPECT_EQ(train.labeled_indices().size(), ds.labeled_indices().size());
}

TEST(Csv, RoundTrip) {
    data::FeatureDataset ds;
    ds.num_classes = 2;
    ds.features = Matrix(3, 2);
    ds.features.values() = {0.1, -2.5, 1.0 / 3.0, 4e-17, 7.0, 1e300};
    ds.true_labels = {0, 1, 1};
    ds.labeled_mask = {true, false, true};
    std::istringstream in(data::to_csv(ds));
    EXPECT_EQ(data::parse_csv(in, 2), ds);
}

TEST(Csv, ShortRowNamesRow) {
    std::istringstream in("id,label,labeled,f0,f1,f2\n0,0,1,1,2,3\n1,1,0,1,2\n");
    try {
        data::parse_csv(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    }
}

TEST(Csv, MalformedInput) {
    auto kind = [](const std::string& text, int C = 0) {
        std::istringstream in(text);
        try {
            data::parse_csv(in, C);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::io_error;  // sentinel: no error
    };
    EXPECT_EQ(kind(""), ErrorKind::parse_error);
    EXPECT_EQ(kind("a,b,c,d\n"), ErrorKind::parse_error);
    EXPECT_EQ(kind("id,label,labeled,f0\n0,x,1,1\n"), ErrorKind::parse_error);
    EXPECT_EQ(kind("id,label,labeled,f0\n0,0,2,1\n"), ErrorKind::parse_error);
    EXPECT_EQ(kind("id,label,labeled,f0\n0,0,1,nan\n"), ErrorKind::parse_error);
    EXPECT_EQ(kind("id,label,labeled,f0\n0,5,1,1\n", 3), ErrorKind::unknown_class);
}

TEST(Csv, MissingLabeledClassFailsValidation) {
    std::istringstream in("id,label,labeled,f0\n0,0,1,1\n1,1,1,2\n2,2,0,3\n3,0,0,4\n");
    const auto ds = data::parse_csv(in, 3);
    try {
        data::validate_for_training(ds);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_labeled_class);
    }
}

TEST(TrainingView, HidesUnlabeledTruth) {
    const auto ds = data::apply_split(data::generate_synthetic(3, 3, 10, 0.2, 2), {0.3, 1, true});
    const auto v = data::training_view(ds);
    EXPECT_EQ(v.labeled.rows() + v.unlabeled.rows(), ds.size());
    EXPECT_EQ(v.labels.size(), v.labeled.rows());
    const auto poisoned = data::poison_unlabeled_labels(ds, 4);
    const auto v2 = data::training_view(poisoned);
    EXPECT_EQ(v.labeled, v2.labeled);
    EXPECT_EQ(v.labels, v2.labels);
    EXPECT_EQ(v.unlabeled, v2.unlabeled);
    EXPECT_NE(data::unlabeled_truth(ds), data::unlabeled_truth(poisoned));
}
