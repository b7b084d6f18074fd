#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "cepred/forest.hpp"
#include "cepred/rng.hpp"

using namespace cepred;

namespace {

// Matrices in these tests use the first few catalog columns and zero-fill
// the rest; the forest only sees numbers.
FeatureMatrix make_matrix(const std::vector<std::pair<std::vector<double>, int>>& samples) {
    FeatureMatrix m;
    std::vector<double> row(m.n_features(), 0.0);
    int i = 0;
    for (const auto& [vals, label] : samples) {
        std::fill(row.begin(), row.end(), 0.0);
        std::copy(vals.begin(), vals.end(), row.begin());
        m.add_row(m.intern_dimm("D" + std::to_string(i++)), i, static_cast<std::uint8_t>(label),
                  row);
    }
    return m;
}

std::vector<std::uint32_t> all_rows(const FeatureMatrix& m) {
    std::vector<std::uint32_t> rows(m.n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint32_t>(i);
    return rows;
}

// two Gaussian-ish blobs, separable on two informative features
FeatureMatrix blob_dataset(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<std::vector<double>, int>> samples;
    for (std::size_t i = 0; i < n; ++i) {
        int label = rng.next_bernoulli(0.5) ? 1 : 0;
        double cx = label ? 3.0 : -3.0;
        double cy = label ? -2.0 : 2.0;
        double x = cx + (rng.next_unit() - 0.5);
        double y = cy + (rng.next_unit() - 0.5);
        double noise = rng.next_unit() * 10.0;  // uninformative column
        samples.push_back({{x, y, noise}, label});
    }
    return make_matrix(samples);
}

}  // namespace

TEST_CASE("gini impurity closed form") {
    CHECK(gini_impurity(0, 0) == 0.0);
    CHECK(gini_impurity(4, 0) == 0.0);
    CHECK(gini_impurity(2, 2) == Catch::Approx(0.5));
    CHECK(gini_impurity(1, 3) == Catch::Approx(1.0 - 0.25 * 0.25 - 0.75 * 0.75));
    CHECK(gini_impurity(3, 1) == gini_impurity(1, 3));
}

TEST_CASE("separable toy set trains to training accuracy 1.0") {
    std::vector<std::pair<std::vector<double>, int>> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({{double(i), 5.0}, 0});
    for (int i = 0; i < 10; ++i) samples.push_back({{double(i) + 100.0, -5.0}, 1});
    auto m = make_matrix(samples);
    ForestParams hp;
    hp.n_trees = 20;
    hp.seed = 3;
    auto forest = train_forest(m, all_rows(m), hp);
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        double p = predict_proba(forest, m.row(r));
        CHECK((p >= 0.5) == (m.row_label(r) == 1));
    }
}

TEST_CASE("identical features with mixed labels give single-leaf trees") {
    std::vector<std::pair<std::vector<double>, int>> samples;
    for (int i = 0; i < 12; ++i) samples.push_back({{1.0, 2.0}, i < 4 ? 1 : 0});
    auto m = make_matrix(samples);
    ForestParams hp;
    hp.n_trees = 10;
    hp.seed = 1;
    auto forest = train_forest(m, all_rows(m), hp);
    for (const auto& tree : forest.trees) {
        REQUIRE(tree.nodes.size() == 1);
        CHECK(tree.nodes[0].is_leaf());
        CHECK(tree.nodes[0].count0 + tree.nodes[0].count1 > 0);
    }
    // bootstrap majority is class 0 in expectation; probability stays inside [0,1]
    double p = predict_proba(forest, m.row(0));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
}

TEST_CASE("training is deterministic: same data and seed, byte-identical model") {
    auto m = blob_dataset(300, 11);
    ForestParams hp;
    hp.n_trees = 15;
    hp.seed = 99;
    auto f1 = train_forest(m, all_rows(m), hp, 1);
    auto f2 = train_forest(m, all_rows(m), hp, 4);  // parallel must match serial
    CHECK(forest_to_json(f1).dump() == forest_to_json(f2).dump());

    hp.seed = 100;
    auto f3 = train_forest(m, all_rows(m), hp);
    CHECK(forest_to_json(f1).dump() != forest_to_json(f3).dump());
}

TEST_CASE("train validates inputs") {
    auto m = blob_dataset(50, 5);
    ForestParams hp;

    std::vector<std::uint32_t> only_zeros;
    for (std::size_t r = 0; r < m.n_rows(); ++r)
        if (m.row_label(r) == 0) only_zeros.push_back(static_cast<std::uint32_t>(r));
    CHECK_THROWS_AS(train_forest(m, only_zeros, hp), DataError);

    auto bad = make_matrix({{{1.0, std::numeric_limits<double>::infinity()}, 0},
                            {{2.0, 1.0}, 1}});
    try {
        train_forest(bad, all_rows(bad), hp);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("D0") != std::string::npos);          // sample
        CHECK(msg.find("ce_count_H") != std::string::npos);  // feature name
    }
}

TEST_CASE("predict_proba: stub tree arithmetic and vote monotonicity") {
    TrainedForest forest;
    forest.n_features = catalog_size();
    DecisionTree stub;
    TreeNode leaf;
    leaf.count0 = 1;
    leaf.count1 = 3;
    stub.nodes.push_back(leaf);
    forest.trees.push_back(stub);

    std::vector<double> x(forest.n_features, 0.0);
    CHECK(predict_proba(forest, x) == Catch::Approx(0.75));

    // adding a certain positive tree never decreases the probability
    DecisionTree sure;
    TreeNode pos;
    pos.count0 = 0;
    pos.count1 = 5;
    sure.nodes.push_back(pos);
    double before = predict_proba(forest, x);
    forest.trees.push_back(sure);
    CHECK(predict_proba(forest, x) >= before);

    std::vector<double> short_x(3, 0.0);
    CHECK_THROWS_AS(predict_proba(forest, short_x), DataError);
}

TEST_CASE("predict_dimm follows the first-crossing rule") {
    // single-feature staircase forest: proba equals x[0] clipped to quarters
    TrainedForest forest;
    forest.n_features = catalog_size();
    DecisionTree t;
    TreeNode root;
    root.feature = 0;
    root.threshold = 0.5;
    root.left = 1;
    root.right = 2;
    t.nodes.push_back(root);
    TreeNode lo;
    lo.count0 = 9;
    lo.count1 = 1;
    t.nodes.push_back(lo);
    TreeNode hi;
    hi.count0 = 3;
    hi.count1 = 7;
    t.nodes.push_back(hi);
    forest.trees.push_back(t);

    FeatureMatrix m;
    std::vector<double> row(m.n_features(), 0.0);
    auto add = [&](std::int64_t ts, double v) {
        row[0] = v;
        m.add_row(m.intern_dimm("D1"), ts, 0, row);
    };
    add(100, 0.1);  // proba 0.1
    add(200, 0.2);  // proba 0.1
    add(300, 0.7);  // proba 0.7 -> first alarm
    add(400, 0.1);

    std::vector<std::uint32_t> rows = {0, 1, 2, 3};
    auto v = predict_dimm(forest, m, rows, 0.5);
    CHECK(v.fail);
    CHECK(v.first_alarm_ts == 300);
    CHECK(v.max_proba == Catch::Approx(0.7));

    auto none = predict_dimm(forest, m, std::vector<std::uint32_t>{0, 1}, 0.5);
    CHECK_FALSE(none.fail);
    CHECK(none.first_alarm_ts == -1);

    // exact threshold alarms (>= comparison)
    auto exact = predict_dimm(forest, m, std::vector<std::uint32_t>{2}, 0.7);
    CHECK(exact.fail);

    auto empty = predict_dimm(forest, m, std::vector<std::uint32_t>{}, 0.5);
    CHECK_FALSE(empty.fail);
}

TEST_CASE("feature importance sums to one and concentrates on used features") {
    auto m = blob_dataset(200, 21);
    ForestParams hp;
    hp.n_trees = 25;
    hp.seed = 5;
    auto forest = train_forest(m, all_rows(m), hp);
    auto imp = feature_importance(forest);
    REQUIRE(imp.size() == m.n_features());
    double total = 0;
    for (double v : imp) {
        CHECK(v >= 0.0);
        total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
    // only the two informative columns and the noise column can ever split;
    // informative mass dominates
    CHECK(imp[0] + imp[1] > 0.9);

    // all-leaf forest: uniform importances
    TrainedForest stub;
    stub.n_features = 4;
    DecisionTree t;
    TreeNode leaf;
    leaf.count0 = 1;
    leaf.count1 = 1;
    t.nodes.push_back(leaf);
    stub.trees.push_back(t);
    auto uniform = feature_importance(stub);
    for (double v : uniform) CHECK(v == Catch::Approx(0.25));
}

TEST_CASE("holdout accuracy on a separable blob dataset is at least 0.95") {
    auto train_m = blob_dataset(150, 31);
    auto test_m = blob_dataset(50, 32);
    ForestParams hp;
    hp.n_trees = 30;
    hp.seed = 8;
    auto forest = train_forest(train_m, all_rows(train_m), hp);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test_m.n_rows(); ++r) {
        double p = predict_proba(forest, test_m.row(r));
        if ((p >= 0.5) == (test_m.row_label(r) == 1)) ++correct;
    }
    CHECK(double(correct) / double(test_m.n_rows()) >= 0.95);
}

TEST_CASE("model JSON round-trip preserves predictions byte-for-byte") {
    auto m = blob_dataset(120, 41);
    ForestParams hp;
    hp.n_trees = 8;
    hp.seed = 77;
    auto forest = train_forest(m, all_rows(m), hp);
    auto j = forest_to_json(forest);
    auto loaded = forest_from_json(j);
    CHECK(forest_to_json(loaded).dump() == j.dump());
    for (std::size_t r = 0; r < m.n_rows(); ++r)
        CHECK(predict_proba(loaded, m.row(r)) == predict_proba(forest, m.row(r)));

    auto tampered = j;
    tampered["catalog_version"] = "cecat-0-deadbeef";
    CHECK_THROWS_AS(forest_from_json(tampered), DataError);
}
