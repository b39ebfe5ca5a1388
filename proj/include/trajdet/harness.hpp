#ifndef TRAJDET_HARNESS_HPP
#define TRAJDET_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajdet/attacks.hpp"
#include "trajdet/dataset.hpp"
#include "trajdet/detector.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/features.hpp"
#include "trajdet/model.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

/// Clean splits B1/B2 of a classifier's test set, their adversarial
/// counterparts D1/D2 (row i of D_k attacks row i of B_k) and optional
/// noisy copies C1/C2 that count as clean.
struct DetectionBundle {
    AttackConfig attack;
    std::uint64_t split_seed = 0;
    bool with_noise = false;
    LabeledData b1, b2;
    std::vector<std::size_t> b1_index, b2_index;  // rows of the source test set
    LabeledData d1, d2;
    std::vector<AttackResult> d1_results, d2_results;
    LabeledData c1, c2;

    /// B1 u C1 u D1.
    LabeledData train() const { return concat({&b1, &c1, &d1}); }
    /// B2 u C2 u D2.
    LabeledData test() const { return concat({&b2, &c2, &d2}); }

    void validate() const {
        if (b1.empty() || b2.empty()) throw ContractError("detection bundle has an empty clean split");
        if (d1.size() != b1.size() || d2.size() != b2.size()) {
            throw ContractError("detection bundle is unbalanced: |D_i| must equal |B_i|");
        }
        if (d1_results.size() != d1.size() || d2_results.size() != d2.size()) {
            throw ContractError("detection bundle is missing attack results");
        }
        std::vector<std::size_t> a = b1_index, b = b2_index;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::size_t> both;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        if (!both.empty()) throw ContractError("detection bundle splits B1 and B2 overlap");
    }

private:
    static LabeledData concat(std::initializer_list<const LabeledData*> parts) {
        LabeledData out;
        for (const LabeledData* p : parts) {
            for (std::size_t i = 0; i < p->size(); ++i) out.push(p->points[i], p->labels[i], p->origins[i]);
            if (out.box.empty()) out.box = p->box;
        }
        return out;
    }
};

/// Random split of [0, n) into round(fraction * n) and the rest.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    return {std::move(first), std::move(second)};
}

inline constexpr double detection_train_fraction = 0.9;

/// Attacks every test row (whether or not the attack succeeds) and splits
/// 0.9/0.1 into the detection train/test halves. Sample i of the test set is
/// always attacked with seed derive_seed(attack.seed, i), so bundles built
/// with the same split seed share B2 across attacks.
inline DetectionBundle build_bundle(const ResidualNet& net, const LabeledData& test_data, const AttackConfig& attack,
                                    std::uint64_t split_seed, bool with_noise, std::size_t threads = 1) {
    test_data.validate();
    if (test_data.size() < 2) throw ContractError("detection bundle needs at least two test samples");
    if (test_data.dim() != net.dim()) throw DimensionError("test data dimension does not match the net");
    DetectionBundle bundle;
    bundle.attack = attack;
    bundle.split_seed = split_seed;
    bundle.with_noise = with_noise;
    auto [first, second] = split_indices(test_data.size(), detection_train_fraction, split_seed);
    bundle.b1_index = std::move(first);
    bundle.b2_index = std::move(second);

    const auto results = attack_batch(net, test_data.points, test_data.labels, attack, test_data.box, threads);
    auto fill = [&](const std::vector<std::size_t>& idx, LabeledData& clean, LabeledData& adv,
                    std::vector<AttackResult>& res, LabeledData& noisy, std::uint64_t noise_stream) {
        clean.box = adv.box = noisy.box = test_data.box;
        for (std::size_t i : idx) {
            clean.push(test_data.points[i], test_data.labels[i], Origin::clean);
            adv.push(results[i].adversarial, test_data.labels[i], Origin::adversarial);
            res.push_back(results[i]);
            if (with_noise) {
                Rng rng(derive_seed(derive_seed(split_seed, noise_stream), i));
                Point p = sample_ball(test_data.points[i], attack.epsilon, attack.norm, rng);
                test_data.box.clip(p);
                noisy.push(std::move(p), test_data.labels[i], Origin::noisy);
            }
        }
    };
    fill(bundle.b1_index, bundle.b1, bundle.d1, bundle.d1_results, bundle.c1, 1);
    fill(bundle.b2_index, bundle.b2, bundle.d2, bundle.d2_results, bundle.c2, 2);
    bundle.validate();
    return bundle;
}

/// Feature rows for `data`; adversarial rows get label 1, clean and noisy rows 0.
inline std::vector<DetectionSample> detection_samples(const ResidualNet& net, const LabeledData& data) {
    std::vector<DetectionSample> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Trajectory t = forward(net, data.points[i]);
        out.push_back({extract_features(t), data.origins[i] == Origin::adversarial ? 1 : 0, t.predicted});
    }
    return out;
}

struct QuantileMetrics {
    double low = 0.0;
    double high = 0.0;
    double accuracy = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct DetectionMetrics {
    std::size_t n_clean = 0;
    std::size_t n_adversarial = 0;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t true_negative = 0;
    std::size_t false_negative = 0;
    double accuracy = 0.0;
    double tpr_all = 0.0;  // detection rate over every adversarial row
    double fpr = 0.0;
    double auroc = 0.0;
    /// Detection rate over adversarials that fool the net and come from a
    /// correctly classified clean row; empty when there are none.
    std::optional<double> tpr_successful;
    std::size_t n_successful = 0;
    std::optional<double> attack_success_rate;
    std::optional<QuantileMetrics> quantile;
};

/// Confusion-matrix metrics. `successful[i]` marks adversarial rows that
/// count towards tpr_successful; pass an empty vector to skip it.
inline DetectionMetrics score_detection(const std::vector<int>& truth, const std::vector<int>& flagged,
                                        const std::vector<double>& general_scores,
                                        const std::vector<bool>& successful = {}) {
    if (truth.size() != flagged.size() || truth.size() != general_scores.size() ||
        (!successful.empty() && successful.size() != truth.size())) {
        throw DimensionError("detection metric inputs have different lengths");
    }
    DetectionMetrics m;
    std::size_t succ_hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 1) {
            ++m.n_adversarial;
            (flagged[i] ? m.true_positive : m.false_negative)++;
            if (!successful.empty() && successful[i]) {
                ++m.n_successful;
                succ_hit += flagged[i] ? 1 : 0;
            }
        } else {
            ++m.n_clean;
            (flagged[i] ? m.false_positive : m.true_negative)++;
        }
    }
    if (m.n_clean == 0 || m.n_adversarial == 0) {
        throw ContractError("detection evaluation needs both clean and adversarial rows");
    }
    const double total = static_cast<double>(truth.size());
    m.accuracy = static_cast<double>(m.true_positive + m.true_negative) / total;
    m.tpr_all = static_cast<double>(m.true_positive) / static_cast<double>(m.n_adversarial);
    m.fpr = static_cast<double>(m.false_positive) / static_cast<double>(m.n_clean);
    m.auroc = auroc(general_scores, truth);
    if (m.n_successful > 0) {
        m.tpr_successful = static_cast<double>(succ_hit) / static_cast<double>(m.n_successful);
    }
    return m;
}

inline QuantileMetrics score_quantile(const QuantileCostDetector& det, const std::vector<double>& costs,
                                      const std::vector<int>& truth) {
    QuantileMetrics q{det.low, det.high};
    std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        const int flag = det.predict(costs[i]);
        if (truth[i] == 1) {
            ++pos;
            tp += static_cast<std::size_t>(flag);
        } else {
            ++neg;
            fp += static_cast<std::size_t>(flag);
        }
    }
    q.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    q.fpr = neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
    q.accuracy = static_cast<double>(tp + (neg - fp)) / static_cast<double>(costs.size());
    return q;
}

struct ExperimentConfig {
    DetectorConfig detector;
    std::uint64_t forest_seed = 0;
    std::size_t threads = 1;
    /// Share of the in-distribution data used for OOD detector training.
    double ood_train_fraction = 0.5;
};

struct ReportRow {
    std::string name;
    DetectionMetrics metrics;
};

struct ExperimentReport {
    std::string experiment;
    double classifier_test_accuracy = 0.0;
    std::vector<ReportRow> rows;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();

    nlohmann::json to_json() const {
        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        nlohmann::json j;
        j["experiment"] = experiment;
        j["classifier_test_accuracy"] = classifier_test_accuracy;
        j["config"] = config;
        j["seeds"] = seeds;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            const auto& m = r.metrics;
            nlohmann::json jr;
            jr["name"] = r.name;
            jr["accuracy"] = m.accuracy;
            jr["tpr_all"] = m.tpr_all;
            jr["tpr_successful"] = opt(m.tpr_successful);
            jr["fpr"] = m.fpr;
            jr["auroc"] = m.auroc;
            jr["attack_success_rate"] = opt(m.attack_success_rate);
            jr["n_clean"] = m.n_clean;
            jr["n_adversarial"] = m.n_adversarial;
            jr["n_successful"] = m.n_successful;
            jr["confusion"] = {{"tp", m.true_positive}, {"fp", m.false_positive},
                               {"tn", m.true_negative}, {"fn", m.false_negative}};
            if (m.quantile) {
                jr["quantile_detector"] = {{"low", m.quantile->low},         {"high", m.quantile->high},
                                           {"accuracy", m.quantile->accuracy}, {"tpr", m.quantile->tpr},
                                           {"fpr", m.quantile->fpr}};
            } else {
                jr["quantile_detector"] = nullptr;
            }
            j["rows"].push_back(std::move(jr));
        }
        return j;
    }
};

inline double classifier_accuracy(const ResidualNet& net, const LabeledData& data) {
    if (data.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) ok += predict(net, data.points[i]) == data.labels[i];
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

inline std::vector<double> transport_costs(const ResidualNet& net, const std::vector<Point>& points) {
    std::vector<double> c;
    c.reserve(points.size());
    for (const Point& p : points) c.push_back(transport_cost(forward(net, p)));
    return c;
}

/// Detector fitted on a bundle's training half.
inline EnsembleDetector fit_bundle_detector(const ResidualNet& net, const DetectionBundle& bundle,
                                            const ExperimentConfig& cfg) {
    bundle.validate();
    return fit_ensemble(detection_samples(net, bundle.train()), cfg.detector, cfg.forest_seed, cfg.threads);
}

/// Metrics of `det` on `eval.test()`; the quantile detector is fitted on the
/// clean costs of `fit_clean`.
inline DetectionMetrics evaluate_bundle(const ResidualNet& net, const EnsembleDetector& det,
                                        const DetectionBundle& eval, const LabeledData& fit_clean) {
    eval.validate();
    const LabeledData test = eval.test();
    const auto samples = detection_samples(net, test);
    std::vector<int> truth, flagged;
    std::vector<double> scores;
    std::vector<bool> successful(test.size(), false);
    for (const auto& s : samples) {
        const Detection d = det.predict(s);
        truth.push_back(s.label);
        flagged.push_back(d.label);
        scores.push_back(det.general_score(s.features));
    }
    // D2 rows sit at the end of test(), in B2 order.
    const std::size_t d_start = test.size() - eval.d2.size();
    std::size_t fooled = 0;
    for (std::size_t i = 0; i < eval.d2.size(); ++i) {
        const bool clean_ok = predict(net, eval.b2.points[i]) == eval.b2.labels[i];
        fooled += eval.d2_results[i].success ? 1 : 0;
        successful[d_start + i] = eval.d2_results[i].success && clean_ok;
    }
    DetectionMetrics m = score_detection(truth, flagged, scores, successful);
    m.attack_success_rate = static_cast<double>(fooled) / static_cast<double>(eval.d2.size());
    if (fit_clean.size() >= min_quantile_samples) {
        const auto qdet = fit_quantile_detector(transport_costs(net, fit_clean.points));
        m.quantile = score_quantile(qdet, transport_costs(net, test.points), truth);
    }
    return m;
}

inline nlohmann::json attack_config_json(const AttackConfig& a) {
    return {{"kind", attack_name(a.kind)}, {"epsilon", a.epsilon},           {"norm", norm_name(a.norm)},
            {"steps", a.steps},            {"step_size", a.step_size},       {"random_start", a.random_start},
            {"overshoot", a.overshoot},    {"clip_deepfool", a.clip_deepfool}, {"seed", a.seed}};
}

inline nlohmann::json detector_config_json(const ExperimentConfig& cfg) {
    return {{"n_trees", cfg.detector.forest.n_trees},
            {"max_depth", cfg.detector.forest.max_depth},
            {"min_leaf", cfg.detector.forest.min_leaf},
            {"features_per_split", cfg.detector.forest.features_per_split},
            {"min_class_samples", cfg.detector.min_class_samples}};
}

/// Detector trained and tested on adversarials from the same attack.
inline ExperimentReport run_seen(const ResidualNet& net, const DetectionBundle& bundle, const ExperimentConfig& cfg) {
    const EnsembleDetector det = fit_bundle_detector(net, bundle, cfg);
    ExperimentReport r;
    r.experiment = "seen";
    r.classifier_test_accuracy =
        (classifier_accuracy(net, bundle.b1) * static_cast<double>(bundle.b1.size()) +
         classifier_accuracy(net, bundle.b2) * static_cast<double>(bundle.b2.size())) /
        static_cast<double>(bundle.b1.size() + bundle.b2.size());
    r.rows.push_back({attack_name(bundle.attack.kind), evaluate_bundle(net, det, bundle, bundle.b1)});
    r.config = {{"attack", attack_config_json(bundle.attack)}, {"detector", detector_config_json(cfg)}};
    r.seeds = {{"forest", cfg.forest_seed}, {"attack", bundle.attack.seed}, {"split", bundle.split_seed}};
    return r;
}

/// One detector fitted on an FGM bundle, evaluated on each bundle in `tests`
/// (their D2 halves come from other attacks).
inline ExperimentReport run_unseen(const ResidualNet& net, const DetectionBundle& train_bundle,
                                   const std::vector<DetectionBundle>& tests, const ExperimentConfig& cfg) {
    if (train_bundle.attack.kind != AttackKind::fgm) {
        throw ContractError("unseen-attack experiments train the detector on FGM adversarials");
    }
    const EnsembleDetector det = fit_bundle_detector(net, train_bundle, cfg);
    ExperimentReport r;
    r.experiment = "unseen";
    r.classifier_test_accuracy =
        (classifier_accuracy(net, train_bundle.b1) * static_cast<double>(train_bundle.b1.size()) +
         classifier_accuracy(net, train_bundle.b2) * static_cast<double>(train_bundle.b2.size())) /
        static_cast<double>(train_bundle.b1.size() + train_bundle.b2.size());
    nlohmann::json test_attacks = nlohmann::json::array();
    for (const auto& t : tests) {
        if (t.b2.dim() != train_bundle.b2.dim()) throw ContractError("test bundle dimension differs from training");
        r.rows.push_back({attack_name(t.attack.kind), evaluate_bundle(net, det, t, train_bundle.b1)});
        test_attacks.push_back(attack_config_json(t.attack));
    }
    r.config = {{"train_attack", attack_config_json(train_bundle.attack)},
                {"test_attacks", test_attacks},
                {"detector", detector_config_json(cfg)}};
    r.seeds = {{"forest", cfg.forest_seed}, {"attack", train_bundle.attack.seed}, {"split", train_bundle.split_seed}};
    return r;
}

/// Detector separating in-distribution rows (label 0) from `second` (label 1),
/// evaluated on held-out in-distribution rows against `third`.
inline ExperimentReport run_ood(const ResidualNet& net, const LabeledData& in_dist, const LabeledData& second,
                                const LabeledData& third, const ExperimentConfig& cfg, std::uint64_t split_seed) {
    for (const LabeledData* d : {&in_dist, &second, &third}) {
        d->validate();
        if (d->empty()) throw ContractError("OOD experiment needs non-empty datasets");
        if (d->dim() != net.dim()) throw ContractError("OOD datasets must match the net's input dimension");
    }
    auto [train_idx, test_idx] = split_indices(in_dist.size(), cfg.ood_train_fraction, split_seed);
    if (train_idx.empty() || test_idx.empty()) throw ContractError("OOD split left an empty half");
    const LabeledData in_train = in_dist.subset(train_idx);
    const LabeledData in_test = in_dist.subset(test_idx);

    auto label_rows = [&](const LabeledData& d, int label) {
        auto s = detection_samples(net, d);
        for (auto& x : s) x.label = label;
        return s;
    };
    auto train = label_rows(in_train, 0);
    for (auto& s : label_rows(second, 1)) train.push_back(std::move(s));
    const EnsembleDetector det = fit_ensemble(train, cfg.detector, cfg.forest_seed, cfg.threads);

    auto test = label_rows(in_test, 0);
    for (auto& s : label_rows(third, 1)) test.push_back(std::move(s));
    std::vector<int> truth, flagged;
    std::vector<double> scores;
    for (const auto& s : test) {
        truth.push_back(s.label);
        flagged.push_back(det.predict(s).label);
        scores.push_back(det.general_score(s.features));
    }
    DetectionMetrics m = score_detection(truth, flagged, scores);
    if (in_train.size() >= min_quantile_samples) {
        std::vector<Point> test_points = in_test.points;
        test_points.insert(test_points.end(), third.points.begin(), third.points.end());
        const auto qdet = fit_quantile_detector(transport_costs(net, in_train.points));
        m.quantile = score_quantile(qdet, transport_costs(net, test_points), truth);
    }
    ExperimentReport r;
    r.experiment = "ood";
    r.classifier_test_accuracy = classifier_accuracy(net, in_test);
    r.rows.push_back({"ood", std::move(m)});
    r.config = {{"detector", detector_config_json(cfg)}, {"ood_train_fraction", cfg.ood_train_fraction}};
    r.seeds = {{"forest", cfg.forest_seed}, {"split", split_seed}};
    return r;
}

}  // namespace trajdet

#endif  // TRAJDET_HARNESS_HPP
