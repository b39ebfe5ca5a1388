#include <algorithm>
#include <cstddef>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "trajdet/errors.hpp"
#include "trajdet/harness.hpp"
#include "trajdet/synthetic.hpp"
#include "trajdet/trainer.hpp"

using namespace trajdet;

namespace {

LabeledData circles(std::size_t n, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n = n;
    spec.seed = seed;
    return gen_synthetic(spec);
}

/// A briefly trained circles net shared by the tests below.
const ResidualNet& trained_net() {
    static const ResidualNet net = [] {
        ModelConfig m;
        m.blocks = 4;
        ResidualNet n = make_net(m, 1);
        TrainConfig cfg;
        cfg.epochs = 15;
        train(n, circles(600, 1), cfg);
        return n;
    }();
    return net;
}

ExperimentConfig small_experiment() {
    ExperimentConfig cfg;
    cfg.detector.forest.n_trees = 20;
    cfg.forest_seed = 3;
    return cfg;
}

}  // namespace

TEST(Bundle, SplitSizesBalanceAndDisjointness) {
    const LabeledData test = circles(1000, 2);
    const auto attack = AttackConfig::defaults(AttackKind::fgm, 0.3);
    const DetectionBundle b = build_bundle(trained_net(), test, attack, 4, false);
    EXPECT_EQ(b.b1.size(), 900u);
    EXPECT_EQ(b.b2.size(), 100u);
    EXPECT_EQ(b.d1.size(), b.b1.size());
    EXPECT_EQ(b.d2.size(), b.b2.size());
    EXPECT_TRUE(b.c1.empty());
    std::set<std::size_t> all(b.b1_index.begin(), b.b1_index.end());
    for (std::size_t i : b.b2_index) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 1000u);
    // Every clean row has its own attacked counterpart, successful or not.
    for (std::size_t k = 0; k < b.b2.size(); ++k) {
        const std::size_t i = b.b2_index[k];
        EXPECT_EQ(b.b2.points[k], test.points[i]);
        AttackConfig c = attack;
        c.seed = derive_seed(attack.seed, i);
        EXPECT_EQ(b.d2.points[k], run_attack(trained_net(), test.points[i], test.labels[i], c, test.box).adversarial);
        EXPECT_EQ(b.d2.origins[k], Origin::adversarial);
    }
    const auto test_rows = b.test();
    EXPECT_EQ(test_rows.size(), 200u);
    const auto samples = detection_samples(trained_net(), test_rows);
    EXPECT_EQ(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; }), 100);
}

TEST(Bundle, NoiseCopiesStayInTheBallAndCountAsClean) {
    const LabeledData test = circles(200, 3);
    const auto attack = AttackConfig::defaults(AttackKind::fgm, 0.2, Norm::l2);
    const DetectionBundle b = build_bundle(trained_net(), test, attack, 5, true);
    ASSERT_EQ(b.c1.size(), b.b1.size());
    ASSERT_EQ(b.c2.size(), b.b2.size());
    for (std::size_t k = 0; k < b.c1.size(); ++k) {
        EXPECT_LE(perturbation_size(b.c1.points[k], b.b1.points[k], Norm::l2), 0.2 + 1e-12);
        EXPECT_EQ(b.c1.origins[k], Origin::noisy);
    }
    const auto samples = detection_samples(trained_net(), b.train());
    EXPECT_EQ(samples.size(), 3 * b.b1.size());
    EXPECT_EQ(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; }),
              static_cast<long>(b.b1.size()));
}

TEST(Bundle, SplitIndicesPartitionTheRange) {
    const auto [a, b] = split_indices(11, 0.9, 1);
    EXPECT_EQ(a.size(), 10u);
    EXPECT_EQ(b.size(), 1u);
    std::vector<std::size_t> all = a;
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(all[i], i);
}

TEST(Metrics, ConfusionMatrixOracle) {
    const std::vector<int> truth = {1, 1, 1, 1, 0, 0, 0, 0, 0, 1};
    const std::vector<int> flagged = {1, 0, 1, 1, 0, 1, 0, 0, 0, 0};
    const std::vector<double> scores = {0.9, 0.4, 0.8, 0.7, 0.1, 0.6, 0.2, 0.3, 0.0, 0.45};
    const std::vector<bool> success = {true, true, false, false, false, false, false, false, false, true};
    const auto m = score_detection(truth, flagged, scores, success);
    EXPECT_EQ(m.true_positive, 3u);
    EXPECT_EQ(m.false_negative, 2u);
    EXPECT_EQ(m.false_positive, 1u);
    EXPECT_EQ(m.true_negative, 4u);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
    EXPECT_DOUBLE_EQ(m.tpr_all, 0.6);
    EXPECT_DOUBLE_EQ(m.fpr, 0.2);
    ASSERT_TRUE(m.tpr_successful.has_value());
    EXPECT_DOUBLE_EQ(*m.tpr_successful, 1.0 / 3.0);
    EXPECT_EQ(m.n_successful, 3u);
    // Positive scores {0.9, 0.4, 0.8, 0.7, 0.45} against negatives {0.1, 0.6, 0.2, 0.3, 0.0}: 23 of 25 pairs.
    EXPECT_DOUBLE_EQ(m.auroc, 23.0 / 25.0);
}

TEST(Metrics, FlagEverythingDetector) {
    const std::vector<int> truth = {0, 1, 0, 1, 1};
    const auto m = score_detection(truth, std::vector<int>(5, 1), std::vector<double>(5, 1.0));
    EXPECT_EQ(m.tpr_all, 1.0);
    EXPECT_EQ(m.fpr, 1.0);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
    EXPECT_EQ(m.auroc, 0.5);
    EXPECT_FALSE(m.tpr_successful.has_value());
    EXPECT_THROW(score_detection({1, 1}, {1, 1}, {0.0, 0.0}), ContractError);
    EXPECT_THROW(score_detection({1, 0}, {1}, {0.0, 0.0}), DimensionError);
}

TEST(Experiments, SeenReportIsBalancedAndSelfConsistent) {
    const LabeledData test = circles(400, 4);
    const auto bundle = build_bundle(trained_net(), test, AttackConfig::defaults(AttackKind::fgm, 0.3), 6, false);
    const auto rep = run_seen(trained_net(), bundle, small_experiment());
    ASSERT_EQ(rep.rows.size(), 1u);
    const auto& m = rep.rows[0].metrics;
    EXPECT_EQ(m.n_clean, 40u);
    EXPECT_EQ(m.n_adversarial, 40u);
    EXPECT_DOUBLE_EQ(m.accuracy, 1.0 - static_cast<double>(m.false_positive + m.false_negative) / 80.0);
    EXPECT_NEAR(m.accuracy, (m.tpr_all + 1.0 - m.fpr) / 2.0, 1e-15);
    ASSERT_TRUE(m.attack_success_rate.has_value());
    EXPECT_TRUE(m.quantile.has_value());
    const auto j = rep.to_json();
    EXPECT_EQ(j["experiment"], "seen");
    EXPECT_EQ(j["config"]["attack"]["kind"], "fgm");
    EXPECT_EQ(j["seeds"]["split"], 6);
    EXPECT_EQ(run_seen(trained_net(), bundle, small_experiment()).to_json().dump(), j.dump());
}

TEST(Experiments, UnseenOnTheTrainingAttackReducesToSeen) {
    const LabeledData test = circles(300, 5);
    const auto bundle = build_bundle(trained_net(), test, AttackConfig::defaults(AttackKind::fgm, 0.3), 7, false);
    const auto seen = run_seen(trained_net(), bundle, small_experiment());
    const auto unseen = run_unseen(trained_net(), bundle, {bundle}, small_experiment());
    EXPECT_EQ(unseen.to_json()["rows"].dump(), seen.to_json()["rows"].dump());

    const auto bim = build_bundle(trained_net(), test, AttackConfig::defaults(AttackKind::bim, 0.3), 7, false);
    EXPECT_EQ(bim.b2_index, bundle.b2_index);
    EXPECT_THROW(run_unseen(trained_net(), bim, {bundle}, small_experiment()), ContractError);
    const auto rep = run_unseen(trained_net(), bundle, {bim}, small_experiment());
    EXPECT_EQ(rep.rows[0].name, "bim");
}

TEST(Experiments, OodSplitsInDistributionData) {
    const LabeledData in = circles(200, 6);
    SyntheticSpec moons;
    moons.kind = SyntheticKind::moons;
    moons.n = 120;
    SyntheticSpec blobs;
    blobs.kind = SyntheticKind::blobs;
    blobs.n = 80;
    blobs.shift_x = 3.0;
    const auto rep = run_ood(trained_net(), in, gen_synthetic(moons), gen_synthetic(blobs), small_experiment(), 2);
    const auto& m = rep.rows[0].metrics;
    EXPECT_EQ(m.n_clean, 100u);
    EXPECT_EQ(m.n_adversarial, 80u);
    EXPECT_TRUE(m.quantile.has_value());
    EXPECT_GE(m.accuracy, 0.0);
    EXPECT_LE(m.accuracy, 1.0);
    EXPECT_EQ(rep.to_json().dump(),
              run_ood(trained_net(), in, gen_synthetic(moons), gen_synthetic(blobs), small_experiment(), 2)
                  .to_json()
                  .dump());
}
