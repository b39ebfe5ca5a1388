#ifndef TRAJDET_FOREST_HPP
#define TRAJDET_FOREST_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajdet/errors.hpp"
#include "trajdet/features.hpp"
#include "trajdet/parallel.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 12;
    std::size_t min_leaf = 2;
    /// 0 selects ceil(sqrt(feature count)).
    std::size_t features_per_split = 0;

    void validate() const {
        if (n_trees == 0) throw ContractError("forest needs at least one tree");
        if (min_leaf == 0) throw ContractError("min_leaf must be positive");
    }
};

/// Binary decision tree over axis-aligned splits `x[feature] <= threshold`.
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::size_t left = 0;
        std::size_t right = 0;
        double positive_fraction = 0.0;  // share of label 1 among training rows reaching the node
    };

    /// Leaf majority; a 50/50 leaf votes 1.
    int vote(std::span<const double> x) const { return leaf(x).positive_fraction >= 0.5 ? 1 : 0; }

    const Node& leaf(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes_[i].feature >= 0) {
            const Node& n = nodes_[i];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes_[i];
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t depth() const { return depth_from(0); }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const Node& n : nodes_) {
            if (n.feature < 0) {
                arr.push_back({{"leaf", {1.0 - n.positive_fraction, n.positive_fraction}}});
            } else {
                arr.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
            }
        }
        return arr;
    }

    static DecisionTree from_json(const nlohmann::json& j, std::size_t n_features) {
        DecisionTree t;
        if (!j.is_array() || j.empty()) throw ContractError("tree dump must be a non-empty array");
        for (const auto& jn : j) {
            Node n;
            if (jn.contains("leaf")) {
                n.positive_fraction = jn.at("leaf").at(1).get<double>();
            } else {
                n.feature = jn.at("feature").get<int>();
                n.threshold = jn.at("threshold").get<double>();
                n.left = jn.at("left").get<std::size_t>();
                n.right = jn.at("right").get<std::size_t>();
            }
            t.nodes_.push_back(n);
        }
        for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
            const Node& n = t.nodes_[i];
            if (n.feature < 0) continue;
            if (static_cast<std::size_t>(n.feature) >= n_features || n.left <= i || n.right <= i ||
                n.left >= t.nodes_.size() || n.right >= t.nodes_.size()) {
                throw ContractError("tree dump has an invalid node " + std::to_string(i));
            }
        }
        return t;
    }

private:
    friend class TreeBuilder;

    std::size_t depth_from(std::size_t i) const {
        const Node& n = nodes_[i];
        if (n.feature < 0) return 0;
        return 1 + std::max(depth_from(n.left), depth_from(n.right));
    }

    std::vector<Node> nodes_;
};

/// Grows one tree on a bootstrap sample of the rows.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<FeatureVector>& x, const std::vector<int>& y, const ForestConfig& cfg,
                std::size_t features_per_split, Rng& rng)
        : x_(x), y_(y), cfg_(cfg), mtry_(features_per_split), rng_(rng) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        tree_ = DecisionTree{};
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    static double gini(double pos, double total) {
        if (total <= 0.0) return 0.0;
        const double p = pos / total;
        return 2.0 * p * (1.0 - p);
    }

    std::size_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
        const std::size_t id = tree_.nodes_.size();
        tree_.nodes_.emplace_back();
        std::size_t pos = 0;
        for (std::size_t r : rows) pos += y_[r] == 1;
        const double n = static_cast<double>(rows.size());
        tree_.nodes_[id].positive_fraction = static_cast<double>(pos) / n;

        if (depth >= cfg_.max_depth || pos == 0 || pos == rows.size() || rows.size() < 2 * cfg_.min_leaf) return id;

        const std::size_t n_features = x_.front().size();
        std::vector<std::size_t> candidates(n_features);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
        rng_.shuffle(candidates.begin(), candidates.end());
        candidates.resize(std::min(mtry_, n_features));

        double best_impurity = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::size_t> sorted = rows;
        for (std::size_t f : candidates) {
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
            std::size_t left_pos = 0;
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                left_pos += y_[sorted[i]] == 1;
                const std::size_t left_n = i + 1;
                const std::size_t right_n = sorted.size() - left_n;
                const double lo = x_[sorted[i]][f];
                const double hi = x_[sorted[i + 1]][f];
                if (!(lo < hi) || left_n < cfg_.min_leaf || right_n < cfg_.min_leaf) continue;
                const double impurity =
                    (static_cast<double>(left_n) * gini(static_cast<double>(left_pos), static_cast<double>(left_n)) +
                     static_cast<double>(right_n) *
                         gini(static_cast<double>(pos - left_pos), static_cast<double>(right_n))) /
                    n;
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = static_cast<int>(f);
                    double mid = lo + (hi - lo) / 2.0;
                    if (!(mid < hi)) mid = lo;
                    best_threshold = mid;
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) {
            (x_[r][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const std::size_t l = grow(left, depth + 1);
        const std::size_t r = grow(right, depth + 1);
        auto& node = tree_.nodes_[id];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    const std::vector<FeatureVector>& x_;
    const std::vector<int>& y_;
    const ForestConfig& cfg_;
    std::size_t mtry_;
    Rng& rng_;
    DecisionTree tree_;
};

/// Bagged Gini trees. score(x) is the fraction of trees voting 1.
class RandomForest {
public:
    RandomForest() = default;

    double score(std::span<const double> x) const {
        if (x.size() != n_features_) {
            throw DimensionError("forest expects " + std::to_string(n_features_) + " features, got " +
                                 std::to_string(x.size()));
        }
        std::size_t votes = 0;
        for (const auto& t : trees_) votes += static_cast<std::size_t>(t.vote(x));
        return static_cast<double>(votes) / static_cast<double>(trees_.size());
    }

    std::size_t votes(std::span<const double> x) const {
        std::size_t v = 0;
        for (const auto& t : trees_) v += static_cast<std::size_t>(t.vote(x));
        return v;
    }

    /// Score 0.5 or above counts as an attack.
    int predict(std::span<const double> x) const { return score(x) >= 0.5 ? 1 : 0; }

    const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
    std::size_t n_features() const noexcept { return n_features_; }
    const ForestConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return seed_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["n_features"] = n_features_;
        j["seed"] = seed_;
        j["config"] = {{"n_trees", cfg_.n_trees},
                       {"max_depth", cfg_.max_depth},
                       {"min_leaf", cfg_.min_leaf},
                       {"features_per_split", cfg_.features_per_split}};
        j["trees"] = nlohmann::json::array();
        for (const auto& t : trees_) j["trees"].push_back(t.to_json());
        return j;
    }

    static RandomForest from_json(const nlohmann::json& j) {
        RandomForest f;
        f.n_features_ = j.at("n_features").get<std::size_t>();
        f.seed_ = j.at("seed").get<std::uint64_t>();
        const auto& c = j.at("config");
        f.cfg_.n_trees = c.at("n_trees").get<std::size_t>();
        f.cfg_.max_depth = c.at("max_depth").get<std::size_t>();
        f.cfg_.min_leaf = c.at("min_leaf").get<std::size_t>();
        f.cfg_.features_per_split = c.at("features_per_split").get<std::size_t>();
        for (const auto& jt : j.at("trees")) f.trees_.push_back(DecisionTree::from_json(jt, f.n_features_));
        if (f.trees_.size() != f.cfg_.n_trees) throw ContractError("forest dump tree count does not match n_trees");
        return f;
    }

private:
    friend RandomForest fit_forest(const std::vector<FeatureVector>&, const std::vector<int>&, const ForestConfig&,
                                   std::uint64_t, std::size_t);

    std::vector<DecisionTree> trees_;
    std::size_t n_features_ = 0;
    ForestConfig cfg_;
    std::uint64_t seed_ = 0;
};

/// Tree t is grown from Rng(derive_seed(seed, t)), so the result does not
/// depend on `threads`.
inline RandomForest fit_forest(const std::vector<FeatureVector>& x, const std::vector<int>& y,
                               const ForestConfig& cfg, std::uint64_t seed, std::size_t threads = 1) {
    cfg.validate();
    if (x.empty()) throw ContractError("cannot fit a forest on no samples");
    if (x.size() != y.size()) throw DimensionError("forest needs one label per sample");
    const std::size_t n_features = x.front().size();
    if (n_features == 0) throw DimensionError("forest needs at least one feature");
    for (const auto& row : x) {
        if (row.size() != n_features) throw DimensionError("forest samples have different feature counts");
    }
    for (int label : y) {
        if (label != 0 && label != 1) throw ContractError("detection labels must be 0 or 1");
    }
    const std::size_t mtry = cfg.features_per_split > 0
                                 ? cfg.features_per_split
                                 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));

    RandomForest forest;
    forest.cfg_ = cfg;
    forest.seed_ = seed;
    forest.n_features_ = n_features;
    forest.trees_.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> rows(x.size());
        for (auto& r : rows) r = static_cast<std::size_t>(rng.below(x.size()));
        TreeBuilder builder(x, y, cfg, mtry, rng);
        forest.trees_[t] = builder.build(std::move(rows));
    });
    return forest;
}

inline RandomForest fit_forest(const std::vector<DetectionSample>& samples, const ForestConfig& cfg,
                               std::uint64_t seed, std::size_t threads = 1) {
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (const auto& s : samples) {
        x.push_back(s.features);
        y.push_back(s.label);
    }
    return fit_forest(x, y, cfg, seed, threads);
}

}  // namespace trajdet

#endif  // TRAJDET_FOREST_HPP
