#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "hydra/error.hpp"
#include "hydra/selector.hpp"
#include "test_support.hpp"

using namespace hydra;

namespace {

const std::vector<CandidateSpec> kSpecs{{"analytical", 0}, {"mlp", 1}};

FeatureVector point(double f0, double f3, double f7) {
    FeatureVector fv;
    fv.normalized = true;
    fv.values.fill(0.5);
    fv.values[0] = f0;
    fv.values[3] = f3;
    fv.values[7] = f7;
    return fv;
}

ForestConfig single_tree_config() {
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.feature_subsample_k = kNumFeatures;
    cfg.max_depth = 64;
    return cfg;
}

// Reference data and a fully grown Gini tree on it, computed by the
// independent implementation in tests/oracles/compute_oracles.py.
struct CartOracle {
    std::vector<FeatureVector> x;
    std::vector<std::size_t> y;
    std::vector<FeatureVector> queries;
    std::vector<std::size_t> expected{1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 1};

    CartOracle() {
        const double f0[] = {0.943, 0.511, 0.976, 0.081, 0.607, 0.376, 0.802, 0.175, 0.872, 0.544,
                             0.902, 0.477, 0.43,  0.789, 0.984, 0.37,  0.969, 0.929, 0.178, 0.609,
                             0.705, 0.943, 0.666, 0.133, 0.498, 0.494, 0.5,   0.959, 0.35,  0.224,
                             0.522, 0.641, 0.939, 0.582, 0.268, 0.93,  0.492, 0.676, 0.476, 0.217};
        const double f3[] = {0.693, 0.771, 0.191, 0.46,  0.362, 0.171, 0.221, 0.963, 0.884, 0.382,
                             0.739, 0.042, 0.915, 0.537, 0.82,  0.276, 0.376, 0.348, 0.972, 0.429,
                             0.5,   0.956, 0.903, 0.395, 0.307, 0.807, 0.107, 0.392, 0.876, 0.918,
                             0.233, 0.079, 0.788, 0.622, 0.238, 0.506, 0.071, 0.7,   0.527, 0.705};
        const double f7[] = {0.088, 0.645, 0.37,  0.499, 0.335, 0.634, 0.568, 0.617, 0.063, 0.225,
                             0.072, 0.383, 0.481, 0.112, 0.668, 0.487, 0.5,   0.597, 0.935, 0.589,
                             0.093, 0.146, 0.694, 0.323, 0.755, 0.511, 0.38,  0.739, 0.183, 0.285,
                             0.292, 0.415, 0.907, 0.813, 0.822, 0.631, 0.008, 0.286, 0.502, 0.898};
        const int labels[] = {1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 1,
                              0, 1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 0};
        for (std::size_t i = 0; i < 40; ++i) {
            x.push_back(point(f0[i], f3[i], f7[i]));
            y.push_back(static_cast<std::size_t>(labels[i]));
        }
        const double q0[] = {0.7844, 0.6284, 0.8874, 0.4154, 0.3204, 0.3714, 0.2824, 0.4794, 0.7574, 0.8754, 0.6334, 0.7864};
        const double q3[] = {0.9704, 0.6604, 0.0854, 0.6264, 0.0204, 0.6784, 0.9984, 0.4894, 0.9334, 0.0204, 0.9654, 0.1684};
        const double q7[] = {0.8404, 0.2984, 0.3934, 0.1334, 0.0374, 0.7524, 0.7464, 0.1244, 0.6234, 0.2584, 0.8974, 0.1344};
        for (std::size_t i = 0; i < 12; ++i) queries.push_back(point(q0[i], q3[i], q7[i]));
    }

    std::vector<SelectorExample> examples() const {
        std::vector<SelectorExample> out;
        for (std::size_t i = 0; i < x.size(); ++i) out.push_back({x[i], kSpecs[y[i]].candidate_id});
        return out;
    }
};

}  // namespace

TEST_CASE("gini impurity") {
    CHECK(gini(std::vector<std::size_t>{10, 0}) == 0.0);
    CHECK(gini(std::vector<std::size_t>{5, 5}) == doctest::Approx(0.5));
    CHECK(gini(std::vector<std::size_t>{1, 1, 1, 1}) == doctest::Approx(0.75));
    CHECK(gini(std::vector<std::size_t>{7}) == 0.0);
    CHECK(gini(std::vector<std::size_t>{3, 1}) < gini(std::vector<std::size_t>{2, 2}));
    CHECK_THROWS_AS(gini(std::vector<std::size_t>{0, 0}), Error);
}

TEST_CASE("lightest adequate rule") {
    const std::vector<int> ranks{0, 1};
    CHECK(lightest_adequate(std::vector<double>{2.00, 1.98}, ranks, 0.05) == 0);
    CHECK(lightest_adequate(std::vector<double>{30.0, 2.0}, ranks, 0.05) == 1);
    CHECK(lightest_adequate(std::vector<double>{5.0}, std::vector<int>{0}, 0.05) == 0);
    // ranks need not follow positions
    CHECK(lightest_adequate(std::vector<double>{1.0, 1.01}, std::vector<int>{1, 0}, 0.05) == 1);
    // common rescaling leaves the choice unchanged
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> e{uniform(rng, 0.5, 3), uniform(rng, 0.5, 3), uniform(rng, 0.5, 3)};
        const std::vector<int> r{2, 0, 1};
        const auto base = lightest_adequate(e, r, 0.05);
        const double k = uniform(rng, 0.01, 100);
        for (auto& v : e) v *= k;
        CHECK(lightest_adequate(e, r, 0.05) == base);
    }
}

TEST_CASE("single tree matches the reference tree") {
    const CartOracle o;
    const auto tree = train_tree(o.x, o.y, 2, single_tree_config(), 0);
    CHECK(tree.nodes.size() == 25);
    CHECK(tree.depth == 7);
    CHECK(tree.nodes[0].feature == 0);
    CHECK(tree.nodes[0].threshold == doctest::Approx(0.496));
    for (std::size_t i = 0; i < o.queries.size(); ++i) {
        CAPTURE(i);
        CHECK(tree.predict(o.queries[i]) == o.expected[i]);
    }
    for (std::size_t i = 0; i < o.x.size(); ++i) CHECK(tree.predict(o.x[i]) == o.y[i]);
}

TEST_CASE("one-tree forest without bootstrap is the plain decision tree") {
    const CartOracle o;
    const auto forest = train_forest(o.examples(), kSpecs, single_tree_config());
    const auto tree = train_tree(o.x, o.y, 2, single_tree_config(), 0);
    REQUIRE(forest.trees.size() == 1);
    CHECK(forest.trees[0] == tree);
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        FeatureVector fv;
        fv.normalized = true;
        for (auto& v : fv.values) v = uniform01(rng);
        CHECK(forest_predict(forest, fv).class_index == tree.predict(fv));
    }
}

TEST_CASE("example order does not matter for a single full tree") {
    const CartOracle o;
    auto ex = o.examples();
    const auto reference = train_forest(ex, kSpecs, single_tree_config());
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        shuffle(ex.begin(), ex.end(), rng);
        CHECK(train_forest(ex, kSpecs, single_tree_config()).trees == reference.trees);
    }
}

TEST_CASE("separable data on one feature is learned exactly") {
    std::vector<SelectorExample> ex;
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        FeatureVector fv;
        fv.normalized = true;
        for (auto& v : fv.values) v = uniform01(rng);
        ex.push_back({fv, fv.values[5] < 0.4 ? "analytical" : "mlp"});
    }
    const auto forest = train_forest(ex, kSpecs, single_tree_config());
    for (const auto& e : ex) CHECK(forest_predict(forest, e.features).candidate_id == e.label);
    CHECK(forest.trees[0].nodes[0].feature == 5);
}

TEST_CASE("a single label yields pure single-leaf trees") {
    std::vector<SelectorExample> ex;
    for (int i = 0; i < 20; ++i) ex.push_back({point(i / 20.0, 0.1, 0.2), "mlp"});
    ForestConfig cfg;
    cfg.n_trees = 5;
    const auto forest = train_forest(ex, kSpecs, cfg);
    for (const auto& t : forest.trees) {
        CHECK(t.nodes.size() == 1);
        CHECK(t.nodes[0].is_leaf());
    }
    CHECK(forest_predict(forest, point(0.3, 0.3, 0.3)).candidate_id == "mlp");
}

TEST_CASE("votes are counted per candidate and ties favour the cheaper one") {
    SelectorForest forest;
    forest.candidate_ids = {"analytical", "mlp"};
    forest.feature_subsample_k = 4;
    auto leaf = [](std::size_t a, std::size_t m) {
        DecisionTree t;
        DecisionTree::Node n;
        n.class_counts = {a, m};
        n.majority = a >= m ? 0 : 1;
        t.nodes.push_back(n);
        return t;
    };
    forest.trees = {leaf(3, 1), leaf(0, 2)};
    CHECK_NOTHROW(validate_forest(forest));
    const auto tie = forest_predict(forest, point(0.1, 0.1, 0.1));
    CHECK(tie.candidate_id == "analytical");
    CHECK(tie.vote_counts == std::vector<std::size_t>{1, 1});
    forest.trees = {leaf(3, 1), leaf(4, 0), leaf(1, 1)};
    const auto unanimous = forest_predict(forest, point(0.1, 0.1, 0.1));
    CHECK(unanimous.candidate_id == "analytical");
    CHECK(unanimous.vote_counts == std::vector<std::size_t>{3, 0});
    FeatureVector raw;
    CHECK_THROWS_AS(forest_predict(forest, raw), Error);
}

TEST_CASE("training is deterministic and seed-sensitive") {
    const CartOracle o;
    ForestConfig cfg;
    cfg.n_trees = 15;
    cfg.seed = 21;
    const auto a = train_forest(o.examples(), kSpecs, cfg);
    CHECK(a == train_forest(o.examples(), kSpecs, cfg));
    CHECK_NOTHROW(validate_forest(a));
    cfg.seed = 22;
    CHECK_FALSE(a.trees == train_forest(o.examples(), kSpecs, cfg).trees);
}

TEST_CASE("forest generalizes at least as well as one tree on a two-regime task") {
    auto make = [](std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<SelectorExample> out;
        for (std::size_t i = 0; i < n; ++i) {
            FeatureVector fv;
            fv.normalized = true;
            for (auto& v : fv.values) v = uniform01(rng);
            const bool noncompute = fv.values[6] + 0.25 * (uniform01(rng) - 0.5) > 0.5;
            out.push_back({fv, noncompute ? "mlp" : "analytical"});
        }
        return out;
    };
    const auto train = make(400, 1), test = make(400, 2);
    auto accuracy = [&](const SelectorForest& f) {
        std::size_t ok = 0;
        for (const auto& e : test) ok += forest_predict(f, e.features).candidate_id == e.label;
        return static_cast<double>(ok) / static_cast<double>(test.size());
    };
    ForestConfig many;
    many.seed = 3;
    ForestConfig one = many;
    one.n_trees = 1;
    CHECK(accuracy(train_forest(train, kSpecs, many)) >= accuracy(train_forest(train, kSpecs, one)));
}

TEST_CASE("config and label errors") {
    const CartOracle o;
    ForestConfig cfg;
    cfg.feature_subsample_k = 12;
    CHECK_THROWS_AS(train_forest(o.examples(), kSpecs, cfg), ConfigError);
    CHECK_THROWS_AS(train_forest(std::vector<SelectorExample>{}, kSpecs, ForestConfig{}), Error);
    auto ex = o.examples();
    ex[4].label = "rnn";
    CHECK_THROWS_WITH_AS(train_forest(ex, kSpecs, ForestConfig{}), doctest::Contains("rnn"), Error);
    CHECK_THROWS_AS(validate_candidates(std::vector<CandidateSpec>{{"a", 0}, {"a", 1}}), ConfigError);
    CHECK_THROWS_AS(validate_candidates(std::vector<CandidateSpec>{{"a", 0}, {"b", 0}}), ConfigError);
}

TEST_CASE("validate_forest rejects broken structure") {
    const CartOracle o;
    auto forest = train_forest(o.examples(), kSpecs, single_tree_config());
    SUBCASE("child out of range") {
        forest.trees[0].nodes[0].left = 999;
        CHECK_THROWS_AS(validate_forest(forest), ConfigError);
    }
    SUBCASE("unreachable node") {
        forest.trees[0].nodes.push_back(forest.trees[0].nodes.back());
        CHECK_THROWS_AS(validate_forest(forest), ConfigError);
    }
    SUBCASE("empty leaf") {
        auto it = std::find_if(forest.trees[0].nodes.begin(), forest.trees[0].nodes.end(),
                               [](const auto& n) { return n.is_leaf(); });
        it->class_counts = {0, 0};
        CHECK_THROWS_AS(validate_forest(forest), ConfigError);
    }
}

TEST_CASE("label_windows applies the rule per disjoint window") {
    // Candidate "analytical" is exact on the first window and 30 W off on the
    // second; "mlp" is always 2 W off.
    Trace tr;
    for (int i = 0; i < 65; ++i) tr.samples.push_back(test::sample_at(i, 10.0 + i, 150.0));
    const auto norm = fit_normalization(tr);
    const std::vector<LabelingCandidate> candidates{
        {{"analytical", 0}, [](const StatSample& s) { return s.timestamp < 30 ? 150.0 : 180.0; }},
        {{"mlp", 1}, [](const StatSample&) { return 152.0; }},
    };
    const auto ex = label_windows(tr, candidates, norm);
    REQUIRE(ex.size() == 2);  // trailing partial window dropped
    CHECK(ex[0].label == "analytical");
    CHECK(ex[1].label == "mlp");
    CHECK(ex[0].features == normalize(tr.samples[15], norm));
    CHECK(ex[1].features == normalize(tr.samples[45], norm));

    SUBCASE("a single candidate always wins") {
        const auto one = label_windows(tr, std::span(candidates).first(1), norm);
        for (const auto& e : one) CHECK(e.label == "analytical");
    }
    SUBCASE("errors") {
        Trace short_tr{"s", 1.0, {tr.samples.begin(), tr.samples.begin() + 10}};
        CHECK_THROWS_AS(label_windows(short_tr, candidates, norm), Error);
        Trace no_power{"n", 1.0, {test::sample_at(0, 1)}};
        CHECK_THROWS_AS(label_windows(no_power, candidates, norm, {1, 0.05}), Error);
    }
}

TEST_CASE("selector dataset CSV") {
    const CartOracle o;
    std::ostringstream out;
    const auto ex = o.examples();
    write_selector_examples_csv(out, std::span(ex).first(2));
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,label");
    CHECK(std::stod(row.substr(0, row.find(','))) == 0.943);
    CHECK(row.ends_with(",mlp"));
}
