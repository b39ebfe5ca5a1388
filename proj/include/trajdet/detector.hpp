#ifndef TRAJDET_DETECTOR_HPP
#define TRAJDET_DETECTOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajdet/errors.hpp"
#include "trajdet/features.hpp"
#include "trajdet/forest.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

struct DetectorConfig {
    ForestConfig forest;
    std::size_t min_class_samples = 20;
};

struct Detection {
    int label = 0;
    double score = 0.0;
};

/// A class-agnostic forest OR-combined with one forest per predicted class.
/// Classes seen fewer than `min_class_samples` times in training only use the
/// general forest.
class EnsembleDetector {
public:
    EnsembleDetector() = default;

    Detection predict(std::span<const double> features, std::size_t predicted_class) const {
        const double g = general_.score(features);
        Detection d{g >= 0.5 ? 1 : 0, g};
        if (auto it = per_class_.find(predicted_class); it != per_class_.end()) {
            const double c = it->second.score(features);
            if (c >= 0.5) d.label = 1;
            d.score = std::max(d.score, c);
        }
        return d;
    }

    Detection predict(const DetectionSample& s) const { return predict(s.features, s.predicted_class); }

    /// Score of the class-agnostic forest alone; AUROC is computed on this.
    double general_score(std::span<const double> features) const { return general_.score(features); }

    const RandomForest& general() const noexcept { return general_; }
    const std::map<std::size_t, RandomForest>& per_class() const noexcept { return per_class_; }
    std::size_t min_class_samples() const noexcept { return min_class_samples_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["min_class_samples"] = min_class_samples_;
        j["general"] = general_.to_json();
        j["per_class"] = nlohmann::json::object();
        for (const auto& [cls, f] : per_class_) j["per_class"][std::to_string(cls)] = f.to_json();
        return j;
    }

    static EnsembleDetector from_json(const nlohmann::json& j) {
        EnsembleDetector d;
        d.min_class_samples_ = j.at("min_class_samples").get<std::size_t>();
        d.general_ = RandomForest::from_json(j.at("general"));
        for (const auto& [key, f] : j.at("per_class").items()) {
            d.per_class_.emplace(static_cast<std::size_t>(std::stoul(key)), RandomForest::from_json(f));
        }
        return d;
    }

private:
    friend EnsembleDetector fit_ensemble(const std::vector<DetectionSample>&, const DetectorConfig&, std::uint64_t,
                                         std::size_t);

    RandomForest general_;
    std::map<std::size_t, RandomForest> per_class_;
    std::size_t min_class_samples_ = 20;
};

inline EnsembleDetector fit_ensemble(const std::vector<DetectionSample>& samples, const DetectorConfig& cfg,
                                     std::uint64_t seed, std::size_t threads = 1) {
    if (samples.empty()) throw ContractError("cannot fit a detector on no samples");
    EnsembleDetector det;
    det.min_class_samples_ = cfg.min_class_samples;
    det.general_ = fit_forest(samples, cfg.forest, derive_seed(seed, "general"), threads);
    std::map<std::size_t, std::vector<DetectionSample>> by_class;
    for (const auto& s : samples) by_class[s.predicted_class].push_back(s);
    for (const auto& [cls, group] : by_class) {
        if (group.size() < cfg.min_class_samples) continue;
        det.per_class_.emplace(cls, fit_forest(group, cfg.forest, derive_seed(seed, 1000 + cls), threads));
    }
    return det;
}

/// Empirical quantile with linear interpolation between order statistics:
/// position (n - 1) q in the sorted sample.
inline double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

/// Flags a transport cost outside the [q_low, q_high] quantile band of clean costs.
struct QuantileCostDetector {
    double low = 0.0;
    double high = 0.0;
    double q_low = 0.02;
    double q_high = 0.98;

    int predict(double cost) const { return cost < low || cost > high ? 1 : 0; }
};

inline constexpr std::size_t min_quantile_samples = 50;

inline QuantileCostDetector fit_quantile_detector(const std::vector<double>& clean_costs, double q_low = 0.02,
                                                  double q_high = 0.98) {
    if (clean_costs.size() < min_quantile_samples) {
        throw ContractError("quantile detector needs at least " + std::to_string(min_quantile_samples) +
                            " clean costs, got " + std::to_string(clean_costs.size()));
    }
    if (!(q_low <= q_high)) throw ContractError("q_low must not exceed q_high");
    QuantileCostDetector det;
    det.q_low = q_low;
    det.q_high = q_high;
    det.low = empirical_quantile(clean_costs, q_low);
    det.high = empirical_quantile(clean_costs, q_high);
    return det;
}

/// Mann-Whitney AUROC with midranks: P(pos > neg) + P(pos == neg) / 2.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auroc needs one label per score");
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ContractError("auroc labels must be 0 or 1");
        n_pos += l == 1;
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ContractError("auroc needs both positive and negative labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // ranks i+1 .. j share the midrank
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace trajdet

#endif  // TRAJDET_DETECTOR_HPP
