#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "trajdet/detector.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/features.hpp"
#include "trajdet/forest.hpp"

using namespace trajdet;

namespace {

double pair_count_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

/// Walks the tree node array directly.
int walk_vote(const DecisionTree& t, const std::vector<double>& x) {
    const auto& nodes = t.nodes();
    std::size_t i = 0;
    while (nodes[i].feature != -1) {
        i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    }
    return nodes[i].positive_fraction >= 0.5 ? 1 : 0;
}

double walk_score(const RandomForest& f, const std::vector<double>& x) {
    int v = 0;
    for (const auto& t : f.trees()) v += walk_vote(t, x);
    return static_cast<double>(v) / static_cast<double>(f.trees().size());
}

ForestConfig small_forest() {
    ForestConfig c;
    c.n_trees = 25;
    c.max_depth = 8;
    return c;
}

}  // namespace

TEST(Features, HandComputedValues) {
    Trajectory t;
    t.residues = {{1.0, 1.0}, {0.0, 0.0}, {3.0, -4.0}, {-2.0, -2.0}};
    const auto f = extract_features(t);
    ASSERT_EQ(f.size(), 8u);
    EXPECT_DOUBLE_EQ(f[0], 1.0);
    EXPECT_DOUBLE_EQ(f[1], 1.0);
    EXPECT_EQ(f[2], 0.0);
    EXPECT_EQ(f[3], 0.0);
    EXPECT_DOUBLE_EQ(f[4], 12.5);
    EXPECT_NEAR(f[5], -1.0 / (5.0 * std::sqrt(2.0)), 1e-15);
    EXPECT_DOUBLE_EQ(f[6], 4.0);
    EXPECT_DOUBLE_EQ(f[7], -1.0);
}

TEST(Features, LengthIsTwiceBlockCountAndCosinesAreBounded) {
    for (std::size_t m : {1u, 2u, 9u, 16u}) {
        ModelConfig cfg;
        cfg.blocks = m;
        cfg.dim = 3;
        const ResidualNet net = make_net(cfg, m);
        Rng rng(m);
        for (int i = 0; i < 20; ++i) {
            const auto f = extract_features(net, trajdet::testing::random_point(3, rng, 3.0));
            ASSERT_EQ(f.size(), 2 * m);
            for (std::size_t k = 1; k < f.size(); k += 2) {
                EXPECT_GE(f[k], -1.0);
                EXPECT_LE(f[k], 1.0);
            }
        }
        EXPECT_EQ(feature_names(m).size(), 2 * m);
    }
    EXPECT_EQ(feature_names(16).size(), 32u);
    EXPECT_EQ(feature_names(2)[3], "block_1_cos");
}

TEST(Forest, ConstantLabelsGiveConstantScores) {
    std::vector<FeatureVector> x;
    for (int i = 0; i < 30; ++i) x.push_back({static_cast<double>(i), static_cast<double>(i % 3)});
    const auto ones = fit_forest(x, std::vector<int>(30, 1), small_forest(), 1);
    const auto zeros = fit_forest(x, std::vector<int>(30, 0), small_forest(), 1);
    for (const auto& t : ones.trees()) EXPECT_EQ(t.nodes().size(), 1u);
    EXPECT_EQ(ones.score(std::vector<double>{5.0, 1.0}), 1.0);
    EXPECT_EQ(zeros.score(std::vector<double>{5.0, 1.0}), 0.0);
}

TEST(Forest, SeparableOneDimensionalDataMatchesScanOracle) {
    std::vector<FeatureVector> x;
    std::vector<int> y;
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.uniform(-1.0, 1.0);
        x.push_back({v});
        y.push_back(v > 0.2 ? 1 : 0);
    }
    // Scan oracle: the largest negative and smallest positive bracket every
    // zero-error threshold.
    double max_neg = -1.0, min_pos = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] == 1)
            min_pos = std::min(min_pos, x[i][0]);
        else
            max_neg = std::max(max_neg, x[i][0]);
    }
    const auto f = fit_forest(x, y, small_forest(), 7);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(f.predict(x[i]), y[i]);
    EXPECT_EQ(f.score(std::vector<double>{max_neg - 0.05}), 0.0);
    EXPECT_EQ(f.score(std::vector<double>{min_pos + 0.05}), 1.0);
    for (const auto& t : f.trees()) {
        for (const auto& n : t.nodes()) {
            if (n.feature < 0) continue;
            EXPECT_GE(n.threshold, -1.0);
            EXPECT_LE(n.threshold, 1.0);
        }
    }
}

TEST(Forest, DeterministicThreadIndependentAndIntegerVotes) {
    std::vector<FeatureVector> x;
    std::vector<int> y;
    Rng rng(4);
    for (int i = 0; i < 150; ++i) {
        FeatureVector v = trajdet::testing::random_point(4, rng);
        y.push_back(v[0] + 0.5 * v[2] + 0.3 * rng.normal() > 0 ? 1 : 0);
        x.push_back(std::move(v));
    }
    const auto a = fit_forest(x, y, small_forest(), 9, 1);
    const auto b = fit_forest(x, y, small_forest(), 9, 3);
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
    const auto back = RandomForest::from_json(a.to_json());
    for (int i = 0; i < 50; ++i) {
        const auto q = trajdet::testing::random_point(4, rng);
        const double s = a.score(q);
        EXPECT_EQ(back.score(q), s);
        EXPECT_EQ(walk_score(a, q), s);
        // The score is a vote count over 25 trees.
        EXPECT_EQ(s, static_cast<double>(a.votes(q)) / 25.0);
    }
    // Every split threshold lies within the observed range of its feature.
    for (const auto& t : a.trees())
        for (const auto& n : t.nodes()) {
            if (n.feature < 0) continue;
            double lo = 1e300, hi = -1e300;
            for (const auto& row : x) {
                lo = std::min(lo, row[static_cast<std::size_t>(n.feature)]);
                hi = std::max(hi, row[static_cast<std::size_t>(n.feature)]);
            }
            EXPECT_GE(n.threshold, lo);
            EXPECT_LT(n.threshold, hi);
        }
    EXPECT_LE(a.trees().front().depth(), small_forest().max_depth);
}

TEST(Forest, RejectsBadInputs) {
    EXPECT_THROW(fit_forest(std::vector<FeatureVector>{}, {}, small_forest(), 1), ContractError);
    EXPECT_THROW(fit_forest({{1.0}, {2.0}}, {0, 2}, small_forest(), 1), ContractError);
    EXPECT_THROW(fit_forest({{1.0}, {2.0, 3.0}}, {0, 1}, small_forest(), 1), DimensionError);
    const auto f = fit_forest({{1.0}, {2.0}, {3.0}, {4.0}}, {0, 0, 1, 1}, small_forest(), 1);
    EXPECT_THROW(f.score(std::vector<double>{1.0, 2.0}), DimensionError);
}

TEST(Ensemble, OrRuleAndFallbackMatchTreeWalkOracle) {
    std::vector<DetectionSample> samples;
    Rng rng(6);
    for (int i = 0; i < 160; ++i) {
        DetectionSample s;
        s.features = trajdet::testing::random_point(3, rng);
        // Class 2 is rare and falls back to the general forest.
        s.predicted_class = i < 150 ? static_cast<std::size_t>(i % 2) : 2u;
        const double shift = s.predicted_class == 0 ? s.features[0] : s.features[1];
        s.label = shift + 0.2 * rng.normal() > 0.0 ? 1 : 0;
        samples.push_back(std::move(s));
    }
    DetectorConfig cfg;
    cfg.forest = small_forest();
    const auto det = fit_ensemble(samples, cfg, 5);
    ASSERT_EQ(det.per_class().size(), 2u);
    EXPECT_EQ(det.per_class().count(2), 0u);
    std::size_t or_only = 0;
    for (int i = 0; i < 300; ++i) {
        const auto x = trajdet::testing::random_point(3, rng);
        const std::size_t cls = static_cast<std::size_t>(i % 3);
        const double g = walk_score(det.general(), x);
        double c = 0.0;
        bool has_class = false;
        if (auto it = det.per_class().find(cls); it != det.per_class().end()) {
            c = walk_score(it->second, x);
            has_class = true;
        }
        const int expected = g >= 0.5 || (has_class && c >= 0.5) ? 1 : 0;
        const Detection d = det.predict(x, cls);
        EXPECT_EQ(d.label, expected);
        EXPECT_EQ(d.score, has_class ? std::max(g, c) : g);
        EXPECT_EQ(det.general_score(x), g);
        or_only += expected == 1 && g < 0.5;
    }
    EXPECT_GT(or_only, 0u);  // the per-class forests do change some decisions
    const auto back = EnsembleDetector::from_json(det.to_json());
    EXPECT_EQ(back.to_json().dump(), det.to_json().dump());
}

TEST(Quantile, NumpyLinearConvention) {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    EXPECT_NEAR(empirical_quantile(v, 0.02), 2.98, 1e-12);
    EXPECT_NEAR(empirical_quantile(v, 0.98), 98.02, 1e-12);
    EXPECT_EQ(empirical_quantile(v, 0.0), 1.0);
    EXPECT_EQ(empirical_quantile(v, 1.0), 100.0);
    const auto det = fit_quantile_detector(v);
    EXPECT_EQ(det.predict(2.0), 1);
    EXPECT_EQ(det.predict(50.0), 0);
    EXPECT_EQ(det.predict(99.0), 1);
    EXPECT_THROW(fit_quantile_detector(std::vector<double>(10, 1.0)), ContractError);
    EXPECT_THROW(empirical_quantile({}, 0.5), ContractError);
}

TEST(Quantile, HeldOutFalsePositiveRateIsAboutFourPercent) {
    Rng rng(8);
    std::vector<double> fit, held;
    for (int i = 0; i < 20000; ++i) fit.push_back(rng.normal());
    for (int i = 0; i < 20000; ++i) held.push_back(rng.normal());
    const auto det = fit_quantile_detector(fit);
    double flagged = 0;
    for (double v : held) flagged += det.predict(v);
    EXPECT_NEAR(flagged / 20000.0, 0.04, 0.006);
}

TEST(Auroc, MatchesPairCountOracleWithTies) {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(trial % 2 ? 4 : 1000));
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        EXPECT_NEAR(auroc(s, y), pair_count_auroc(s, y), 1e-12);
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(0.1 * s[i]) - 3.0;
        EXPECT_NEAR(auroc(t, y), auroc(s, y), 1e-12);
    }
}

TEST(Auroc, ExtremesAndErrors) {
    const std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
    EXPECT_EQ(auroc(s, std::vector<int>{0, 0, 1, 1}), 1.0);
    EXPECT_EQ(auroc(s, std::vector<int>{1, 1, 0, 0}), 0.0);
    EXPECT_EQ(auroc(std::vector<double>(4, 0.5), std::vector<int>{1, 0, 1, 0}), 0.5);
    EXPECT_THROW(auroc(s, std::vector<int>{1, 1, 1, 1}), ContractError);
    EXPECT_THROW(auroc(s, std::vector<int>{1, 0}), DimensionError);
}
