#ifndef TRAJDET_CONFIG_HPP
#define TRAJDET_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajdet/attacks.hpp"
#include "trajdet/detector.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/model.hpp"
#include "trajdet/synthetic.hpp"
#include "trajdet/trainer.hpp"

namespace trajdet {

/// Dataset generation settings; per-split seeds come from the master seed.
struct DataSection {
    SyntheticKind kind = SyntheticKind::circles;
    std::size_t n_train = 2000;
    std::size_t n_test = 1000;
    double noise = 0.08;
    double margin = 0.0;
    double blob_separation = 6.0;
    double shift_x = 0.0;
    double shift_y = 0.0;

    SyntheticSpec spec(std::size_t n, std::uint64_t seed) const {
        SyntheticSpec s;
        s.kind = kind;
        s.n = n;
        s.noise = noise;
        s.seed = seed;
        s.margin = margin;
        s.blob_separation = blob_separation;
        s.shift_x = shift_x;
        s.shift_y = shift_y;
        return s;
    }
};

/// Files a command reads. Relative paths are taken as given.
struct InputsSection {
    std::string train_data;
    std::string test_data;
    std::string checkpoint;
    std::string dataset;
    std::string features;
    std::string eval_features;
};

struct ExperimentSection {
    bool with_noise = false;
    std::vector<AttackKind> test_attacks = {AttackKind::bim, AttackKind::pgd};
    double ood_train_fraction = 0.5;
    SyntheticSpec ood_second = [] {
        SyntheticSpec s;
        s.kind = SyntheticKind::moons;
        s.n = 500;
        return s;
    }();
    SyntheticSpec ood_third = [] {
        SyntheticSpec s;
        s.kind = SyntheticKind::blobs;
        s.n = 500;
        s.noise = 0.3;
        s.blob_separation = 4.0;
        s.shift_x = 2.0;
        s.shift_y = 2.0;
        return s;
    }();
};

struct DemoSection {
    std::size_t n_ood = 100;
    double ood_radius = 1.6;  // injected points lie on this circle
    bool svg = false;
};

/// Everything a command may need. Every section is optional; unknown keys
/// anywhere are fatal.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "out";
    std::size_t threads = 1;
    DataSection data;
    ModelConfig model;
    TrainConfig train;
    AttackConfig attack = AttackConfig::defaults(AttackKind::fgm, 0.3);
    DetectorConfig detect;
    ExperimentSection experiment;
    InputsSection inputs;
    DemoSection demo;
};

namespace detail {

/// 1-based line and column of byte `offset` in `text`.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Reads one JSON object, remembering which keys were consumed.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string path, const std::string& text)
        : j_(j), path_(std::move(path)), text_(text) {
        if (!j_.is_object()) fail("'" + path_ + "' must be an object", path_);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    void read(const std::string& key, T& into) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        try {
            into = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            fail("'" + qualified(key) + "' has the wrong type", key);
        }
    }

    void read_real(const std::string& key, double& into) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        if (!j_.at(key).is_number()) fail("'" + qualified(key) + "' must be a number", key);
        into = j_.at(key).get<double>();
    }

    void read_count(const std::string& key, std::size_t& into) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        if (!j_.at(key).is_number_unsigned()) fail("'" + qualified(key) + "' must be a non-negative integer", key);
        into = j_.at(key).get<std::size_t>();
    }

    template <class Parse, class T>
    void read_enum(const std::string& key, T& into, Parse parse) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        if (!j_.at(key).is_string()) fail("'" + qualified(key) + "' must be a string", key);
        try {
            into = parse(j_.at(key).get<std::string>());
        } catch (const ContractError& e) {
            fail("'" + qualified(key) + "': " + e.what(), key);
        }
    }

    std::optional<StrictObject> child(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) return std::nullopt;
        return StrictObject(j_.at(key), qualified(key), text_);
    }

    /// Throws on the first key that no read() asked for.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) fail("unknown config key '" + qualified(key) + "'", key);
        }
    }

    [[noreturn]] void fail(const std::string& what, const std::string& key) const {
        const std::string needle = "\"" + key + "\"";
        const std::size_t at = text_.find(needle);
        if (at == std::string::npos) throw ConfigError(what);
        const auto [line, col] = line_column(text_, at);
        throw ConfigError(what, line, col);
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const nlohmann::json& j_;
    std::string path_;
    const std::string& text_;
    std::set<std::string> used_;
};

inline void read_synthetic(StrictObject& o, SyntheticSpec& s) {
    o.read_enum("kind", s.kind, parse_synthetic_kind);
    o.read_count("n", s.n);
    o.read_real("noise", s.noise);
    o.read_real("margin", s.margin);
    o.read_real("blob_separation", s.blob_separation);
    o.read_real("shift_x", s.shift_x);
    o.read_real("shift_y", s.shift_y);
    o.finish();
}

}  // namespace detail

/// Parses a JSON run configuration. Syntax errors and unknown keys raise
/// ConfigError carrying a line and column.
inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // nlohmann reports the offset one past the offending character.
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, col] = detail::line_column(text, at);
        throw ConfigError("config is not valid JSON", line, col);
    }
    RunConfig c;
    detail::StrictObject root(j, "", text);
    root.read_count("seed", c.seed);
    root.read("out", c.out);
    root.read_count("threads", c.threads);

    if (auto o = root.child("data")) {
        o->read_enum("kind", c.data.kind, parse_synthetic_kind);
        o->read_count("n_train", c.data.n_train);
        o->read_count("n_test", c.data.n_test);
        o->read_real("noise", c.data.noise);
        o->read_real("margin", c.data.margin);
        o->read_real("blob_separation", c.data.blob_separation);
        o->read_real("shift_x", c.data.shift_x);
        o->read_real("shift_y", c.data.shift_y);
        o->finish();
    }
    if (auto o = root.child("model")) {
        o->read_count("width", c.model.width);
        o->read_count("blocks", c.model.blocks);
        o->read_real("h", c.model.h);
        o->read_real("block_gain", c.model.block_gain);
        o->finish();
    }
    if (auto o = root.child("train")) {
        o->read_enum("mode", c.train.mode, [](const std::string& s) {
            if (s == "vanilla") return TrainMode::vanilla;
            if (s == "lap") return TrainMode::lap;
            throw ContractError("unknown training mode '" + s + "'");
        });
        o->read_real("learning_rate", c.train.learning_rate);
        o->read_count("epochs", c.train.epochs);
        o->read_count("batch_size", c.train.batch_size);
        o->read_real("tau", c.train.tau);
        o->read_count("s", c.train.s);
        o->read_real("lambda0", c.train.lambda0);
        o->read("normalize_objective", c.train.normalize_objective);
        o->finish();
    }
    if (auto o = root.child("attack")) {
        AttackKind kind = AttackKind::fgm;
        Norm norm = Norm::linf;
        double eps = 0.3;
        o->read_enum("kind", kind, parse_attack_kind);
        o->read_enum("norm", norm, parse_norm);
        o->read_real("epsilon", eps);
        c.attack = AttackConfig::defaults(kind, eps, norm);
        o->read_count("steps", c.attack.steps);
        o->read_real("step_size", c.attack.step_size);
        o->read("random_start", c.attack.random_start);
        o->read_real("overshoot", c.attack.overshoot);
        o->read("clip_deepfool", c.attack.clip_deepfool);
        o->finish();
    }
    if (auto o = root.child("detect")) {
        o->read_count("n_trees", c.detect.forest.n_trees);
        o->read_count("max_depth", c.detect.forest.max_depth);
        o->read_count("min_leaf", c.detect.forest.min_leaf);
        o->read_count("features_per_split", c.detect.forest.features_per_split);
        o->read_count("min_class_samples", c.detect.min_class_samples);
        o->finish();
    }
    if (auto o = root.child("experiment")) {
        o->read("with_noise", c.experiment.with_noise);
        if (o->has("test_attacks")) {
            std::vector<std::string> names;
            o->read("test_attacks", names);
            c.experiment.test_attacks.clear();
            for (const auto& n : names) {
                try {
                    c.experiment.test_attacks.push_back(parse_attack_kind(n));
                } catch (const ContractError& e) {
                    o->fail(std::string("'experiment.test_attacks': ") + e.what(), "test_attacks");
                }
            }
        }
        o->read_real("ood_train_fraction", c.experiment.ood_train_fraction);
        if (auto s = o->child("ood_second")) detail::read_synthetic(*s, c.experiment.ood_second);
        if (auto s = o->child("ood_third")) detail::read_synthetic(*s, c.experiment.ood_third);
        o->finish();
    }
    if (auto o = root.child("inputs")) {
        o->read("train_data", c.inputs.train_data);
        o->read("test_data", c.inputs.test_data);
        o->read("checkpoint", c.inputs.checkpoint);
        o->read("dataset", c.inputs.dataset);
        o->read("features", c.inputs.features);
        o->read("eval_features", c.inputs.eval_features);
        o->finish();
    }
    if (auto o = root.child("demo")) {
        o->read_count("n_ood", c.demo.n_ood);
        o->read_real("ood_radius", c.demo.ood_radius);
        o->read("svg", c.demo.svg);
        o->finish();
    }
    root.finish();

    try {
        c.train.validate();
        c.attack.validate();
        c.detect.forest.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    if (c.threads == 0) throw ConfigError("threads must be at least 1");
    if (!(c.experiment.ood_train_fraction > 0.0 && c.experiment.ood_train_fraction < 1.0)) {
        throw ConfigError("experiment.ood_train_fraction must lie in (0, 1)");
    }
    return c;
}

}  // namespace trajdet

#endif  // TRAJDET_CONFIG_HPP
