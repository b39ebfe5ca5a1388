#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajdet/checkpoint.hpp"
#include "trajdet/config.hpp"
#include "trajdet/csv.hpp"
#include "trajdet/harness.hpp"
#include "trajdet/plot.hpp"
#include "trajdet/synthetic.hpp"
#include "trajdet/text_format.hpp"
#include "trajdet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajdet;

namespace {

enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_usage = 2,
    exit_config = 3,
    exit_missing_file = 4,
    exit_invariant = 5,
    exit_numeric = 6,
};

/// Child seeds of the master seed, one per pipeline stage.
struct Seeds {
    std::uint64_t master;
    std::uint64_t data_train, data_test, model, train, attack, split, forest, ood_second, ood_third, demo_ood;

    explicit Seeds(std::uint64_t s)
        : master(s),
          data_train(derive_seed(s, "data.train")),
          data_test(derive_seed(s, "data.test")),
          model(derive_seed(s, "model")),
          train(derive_seed(s, "train")),
          attack(derive_seed(s, "attack")),
          split(derive_seed(s, "split")),
          forest(derive_seed(s, "forest")),
          ood_second(derive_seed(s, "ood.second")),
          ood_third(derive_seed(s, "ood.third")),
          demo_ood(derive_seed(s, "demo.ood")) {}

    json to_json() const {
        return {{"master", master}, {"data_train", data_train}, {"data_test", data_test}, {"model", model},
                {"train", train},   {"attack", attack},         {"split", split},         {"forest", forest}};
    }
};

struct Context {
    RunConfig cfg;
    Seeds seeds{0};
    fs::path out;

    fs::path path(const std::string& name) const { return out / name; }
};

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

const std::string& require_input(const std::string& value, const char* key, const char* command) {
    if (value.empty()) {
        throw ConfigError(std::string("inputs.") + key + " is required for '" + command + "'");
    }
    return value;
}

ResidualNet load_net(const Context& ctx, const char* command) {
    return load_checkpoint(read_text_file(require_input(ctx.cfg.inputs.checkpoint, "checkpoint", command)));
}

LabeledData load_data(const std::string& path, const ResidualNet* net) {
    LabeledData d = read_dataset(path);
    if (d.empty()) throw ContractError("dataset '" + path + "' has no rows");
    if (net && d.dim() != net->dim()) throw DimensionError("dataset '" + path + "' does not match the net's input");
    return d;
}

AttackConfig seeded_attack(const Context& ctx, AttackConfig a) {
    a.seed = ctx.seeds.attack;
    return a;
}

ExperimentConfig experiment_config(const Context& ctx) {
    ExperimentConfig e;
    e.detector = ctx.cfg.detect;
    e.forest_seed = ctx.seeds.forest;
    e.threads = ctx.cfg.threads;
    e.ood_train_fraction = ctx.cfg.experiment.ood_train_fraction;
    return e;
}

json model_json(const ModelConfig& m) {
    return {{"dim", m.dim},   {"width", m.width}, {"blocks", m.blocks},
            {"classes", m.classes}, {"h", m.h}, {"block_gain", m.block_gain}};
}

json train_json(const TrainConfig& t) {
    return {{"mode", t.mode == TrainMode::lap ? "lap" : "vanilla"},
            {"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"tau", t.tau},
            {"s", t.s},
            {"lambda0", t.lambda0},
            {"normalize_objective", t.normalize_objective},
            {"seed", t.seed}};
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Trains a fresh net on `data`; dimensions come from the data.
ResidualNet fit_net(const Context& ctx, const LabeledData& data, TrainMode mode, TrainReport& report) {
    ModelConfig m = ctx.cfg.model;
    m.dim = data.dim();
    std::size_t max_label = 1;
    for (std::size_t y : data.labels) max_label = std::max(max_label, y);
    m.classes = max_label + 1;
    ResidualNet net = make_net(m, ctx.seeds.model);
    TrainConfig t = ctx.cfg.train;
    t.mode = mode;
    t.seed = ctx.seeds.train;
    report = train(net, data, t);
    return net;
}

int cmd_gen_data(const Context& ctx) {
    const auto& d = ctx.cfg.data;
    const LabeledData train_set = gen_synthetic(d.spec(d.n_train, ctx.seeds.data_train));
    const LabeledData test_set = gen_synthetic(d.spec(d.n_test, ctx.seeds.data_test));
    write_dataset(ctx.path("train.csv").string(), train_set);
    write_dataset(ctx.path("test.csv").string(), test_set);
    json manifest = {{"kind", synthetic_name(d.kind)}, {"n_train", d.n_train}, {"n_test", d.n_test},
                     {"noise", d.noise},              {"margin", d.margin},   {"seeds", ctx.seeds.to_json()}};
    write_text_file(ctx.path("data.json").string(), pretty(manifest));
    return exit_ok;
}

int cmd_train(const Context& ctx) {
    const LabeledData data = load_data(require_input(ctx.cfg.inputs.train_data, "train_data", "train"), nullptr);
    TrainReport rep;
    const ResidualNet net = fit_net(ctx, data, ctx.cfg.train.mode, rep);
    write_text_file(ctx.path("checkpoint.json").string(), save_checkpoint(net));
    TrainConfig t = ctx.cfg.train;
    t.seed = ctx.seeds.train;
    ModelConfig m = ctx.cfg.model;
    m.dim = net.dim();
    m.classes = net.num_classes();
    json j = {{"model", model_json(m)},
              {"train", train_json(t)},
              {"loss_history", rep.loss_history},
              {"cost_history", rep.cost_history},
              {"lambda_trace", rep.lambda_trace},
              {"update_losses", rep.update_losses},
              {"final_train_accuracy", rep.final_train_accuracy},
              {"seeds", ctx.seeds.to_json()}};
    if (!ctx.cfg.inputs.test_data.empty()) {
        const LabeledData test = load_data(ctx.cfg.inputs.test_data, &net);
        j["test_accuracy"] = classifier_accuracy(net, test);
        j["test_mean_transport_cost"] = mean(transport_costs(net, test.points));
    }
    write_text_file(ctx.path("train_report.json").string(), pretty(j));
    return exit_ok;
}

int cmd_attack(const Context& ctx) {
    const ResidualNet net = load_net(ctx, "attack");
    const LabeledData data = load_data(require_input(ctx.cfg.inputs.test_data, "test_data", "attack"), &net);
    const AttackConfig a = seeded_attack(ctx, ctx.cfg.attack);
    const auto results = attack_batch(net, data.points, data.labels, a, data.box, ctx.cfg.threads);
    LabeledData adv;
    adv.box = data.box;
    json rows = json::array();
    std::size_t fooled = 0;
    double max_norm = 0.0;
    // Clean rows first, then their adversarial counterparts in the same order,
    // so the file is a complete detection dataset.
    for (std::size_t i = 0; i < data.size(); ++i) adv.push(data.points[i], data.labels[i], Origin::clean);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        adv.push(r.adversarial, data.labels[i], Origin::adversarial);
        fooled += r.success ? 1 : 0;
        max_norm = std::max(max_norm, r.perturbation_norm);
        rows.push_back({{"index", i},
                        {"success", r.success},
                        {"perturbation_norm", r.perturbation_norm},
                        {"queries", r.queries},
                        {"diagnostic", r.diagnostic}});
    }
    write_dataset(ctx.path("adversarial.csv").string(), adv);
    json manifest = {{"attack", attack_config_json(a)},
                     {"source", ctx.cfg.inputs.test_data},
                     {"n", results.size()},
                     {"success_rate", static_cast<double>(fooled) / static_cast<double>(results.size())},
                     {"max_perturbation_norm", max_norm},
                     {"samples", rows}};
    write_text_file(ctx.path("attack_manifest.json").string(), pretty(manifest));
    return exit_ok;
}

int cmd_extract_features(const Context& ctx) {
    const ResidualNet net = load_net(ctx, "extract-features");
    const LabeledData data =
        load_data(require_input(ctx.cfg.inputs.dataset, "dataset", "extract-features"), &net);
    write_text_file(ctx.path("features.csv").string(),
                    features_to_csv(detection_samples(net, data), net.num_blocks()));
    return exit_ok;
}

int cmd_fit_detector(const Context& ctx) {
    const auto samples =
        features_from_csv(read_text_file(require_input(ctx.cfg.inputs.features, "features", "fit-detector")));
    const EnsembleDetector det = fit_ensemble(samples, ctx.cfg.detect, ctx.seeds.forest, ctx.cfg.threads);
    write_text_file(ctx.path("detector.json").string(), det.to_json().dump() + "\n");
    if (!ctx.cfg.inputs.eval_features.empty()) {
        const auto eval = features_from_csv(read_text_file(ctx.cfg.inputs.eval_features));
        std::vector<int> truth, flagged;
        std::vector<double> scores;
        for (const auto& s : eval) {
            if (s.features.size() != samples.front().features.size()) {
                throw DimensionError("evaluation features have a different length than training features");
            }
            truth.push_back(s.label);
            flagged.push_back(det.predict(s).label);
            scores.push_back(det.general_score(s.features));
        }
        ReportRow row{"detector", score_detection(truth, flagged, scores)};
        ExperimentReport rep;
        rep.experiment = "fit-detector";
        rep.rows.push_back(row);
        rep.config = {{"detector", detector_config_json(experiment_config(ctx))}};
        rep.seeds = {{"forest", ctx.seeds.forest}};
        write_text_file(ctx.path("detector_metrics.json").string(), pretty(rep.to_json()));
    }
    return exit_ok;
}

int cmd_experiment_seen(const Context& ctx) {
    const ResidualNet net = load_net(ctx, "experiment-seen");
    const LabeledData test = load_data(require_input(ctx.cfg.inputs.test_data, "test_data", "experiment-seen"), &net);
    const auto bundle = build_bundle(net, test, seeded_attack(ctx, ctx.cfg.attack), ctx.seeds.split,
                                     ctx.cfg.experiment.with_noise, ctx.cfg.threads);
    ExperimentReport rep = run_seen(net, bundle, experiment_config(ctx));
    rep.seeds["master"] = ctx.seeds.master;
    rep.config["with_noise"] = ctx.cfg.experiment.with_noise;
    write_text_file(ctx.path("report_seen.json").string(), pretty(rep.to_json()));
    return exit_ok;
}

int cmd_experiment_unseen(const Context& ctx) {
    const ResidualNet net = load_net(ctx, "experiment-unseen");
    const LabeledData test =
        load_data(require_input(ctx.cfg.inputs.test_data, "test_data", "experiment-unseen"), &net);
    const AttackConfig train_attack = seeded_attack(ctx, ctx.cfg.attack);
    if (train_attack.kind != AttackKind::fgm) throw ConfigError("experiment-unseen needs attack.kind = \"fgm\"");
    const auto train_bundle =
        build_bundle(net, test, train_attack, ctx.seeds.split, ctx.cfg.experiment.with_noise, ctx.cfg.threads);
    std::vector<DetectionBundle> tests;
    for (AttackKind k : ctx.cfg.experiment.test_attacks) {
        const AttackConfig a = seeded_attack(ctx, AttackConfig::defaults(k, train_attack.epsilon, train_attack.norm));
        tests.push_back(build_bundle(net, test, a, ctx.seeds.split, ctx.cfg.experiment.with_noise, ctx.cfg.threads));
    }
    ExperimentReport rep = run_unseen(net, train_bundle, tests, experiment_config(ctx));
    rep.seeds["master"] = ctx.seeds.master;
    rep.config["with_noise"] = ctx.cfg.experiment.with_noise;
    write_text_file(ctx.path("report_unseen.json").string(), pretty(rep.to_json()));
    return exit_ok;
}

int cmd_experiment_ood(const Context& ctx) {
    const ResidualNet net = load_net(ctx, "experiment-ood");
    const LabeledData in = load_data(require_input(ctx.cfg.inputs.test_data, "test_data", "experiment-ood"), &net);
    SyntheticSpec second = ctx.cfg.experiment.ood_second, third = ctx.cfg.experiment.ood_third;
    second.seed = ctx.seeds.ood_second;
    third.seed = ctx.seeds.ood_third;
    ExperimentReport rep =
        run_ood(net, in, gen_synthetic(second), gen_synthetic(third), experiment_config(ctx), ctx.seeds.split);
    auto spec_json = [](const SyntheticSpec& s) {
        return json{{"kind", synthetic_name(s.kind)}, {"n", s.n},           {"noise", s.noise},
                    {"blob_separation", s.blob_separation}, {"shift_x", s.shift_x}, {"shift_y", s.shift_y},
                    {"seed", s.seed}};
    };
    rep.config["second"] = spec_json(second);
    rep.config["third"] = spec_json(third);
    rep.seeds["master"] = ctx.seeds.master;
    write_text_file(ctx.path("report_ood.json").string(), pretty(rep.to_json()));
    return exit_ok;
}

int cmd_demo_circles(const Context& ctx) {
    DataSection d = ctx.cfg.data;
    d.kind = SyntheticKind::circles;
    const LabeledData train_set = gen_synthetic(d.spec(d.n_train, ctx.seeds.data_train));
    const LabeledData test_set = gen_synthetic(d.spec(d.n_test, ctx.seeds.data_test));

    std::vector<ScatterPoint> pts;
    for (std::size_t i = 0; i < test_set.size(); ++i) pts.push_back({test_set.points[i], test_set.labels[i], "clean"});
    Rng rng(ctx.seeds.demo_ood);
    for (std::size_t i = 0; i < ctx.cfg.demo.n_ood; ++i) {
        const double t = 2.0 * std::numbers::pi * rng.uniform();
        pts.push_back({{ctx.cfg.demo.ood_radius * std::cos(t), ctx.cfg.demo.ood_radius * std::sin(t)}, 0, "ood"});
    }

    json summary = json::object();
    for (TrainMode mode : {TrainMode::vanilla, TrainMode::lap}) {
        const std::string name = mode == TrainMode::lap ? "lap" : "vanilla";
        TrainReport rep;
        const ResidualNet net = fit_net(ctx, train_set, mode, rep);
        write_text_file(ctx.path("scatter_" + name + ".csv").string(), scatter_csv(net, pts));

        const auto clean = transport_costs(net, test_set.points);
        const AttackConfig a = seeded_attack(ctx, ctx.cfg.attack);
        std::vector<Point> adv_points;
        for (const auto& r : attack_batch(net, test_set.points, test_set.labels, a, test_set.box, ctx.cfg.threads)) {
            adv_points.push_back(r.adversarial);
        }
        const auto adv = transport_costs(net, adv_points);
        const auto q = fit_quantile_detector(clean);
        write_text_file(ctx.path("histogram_" + name + ".csv").string(), histogram_csv(clean, adv, q.low, q.high));
        if (ctx.cfg.demo.svg) {
            std::vector<std::size_t> shown = {std::min<std::size_t>(6, net.num_blocks()), net.num_blocks()};
            if (shown[0] == shown[1]) shown.pop_back();
            for (std::size_t m : shown) {
                write_text_file(ctx.path("scatter_" + name + "_block" + std::to_string(m) + ".svg").string(),
                                scatter_svg(net, pts, m));
            }
            write_text_file(ctx.path("histogram_" + name + ".svg").string(), histogram_svg(clean, adv, q.low, q.high));
        }
        summary[name] = {{"test_accuracy", classifier_accuracy(net, test_set)},
                         {"test_mean_transport_cost", mean(clean)},
                         {"adversarial_mean_transport_cost", mean(adv)},
                         {"quantile_low", q.low},
                         {"quantile_high", q.high},
                         {"final_train_accuracy", rep.final_train_accuracy}};
    }
    summary["attack"] = attack_config_json(seeded_attack(ctx, ctx.cfg.attack));
    summary["seeds"] = ctx.seeds.to_json();
    write_text_file(ctx.path("demo_summary.json").string(), pretty(summary));
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory-based adversarial detection for residual nets"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--out", out, "output directory (overrides the config)");
    app.add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Context&);
    };
    const Command commands[] = {
        {"gen-data", "generate train/test synthetic datasets", cmd_gen_data},
        {"train", "train a residual net (vanilla or LAP)", cmd_train},
        {"attack", "attack every row of a dataset", cmd_attack},
        {"extract-features", "write trajectory features of a dataset", cmd_extract_features},
        {"fit-detector", "fit the ensemble detector on a feature file", cmd_fit_detector},
        {"experiment-seen", "detector trained and tested on one attack", cmd_experiment_seen},
        {"experiment-unseen", "detector trained on FGM, tested on other attacks", cmd_experiment_unseen},
        {"experiment-ood", "out-of-distribution detection", cmd_experiment_ood},
        {"demo-circles", "embedding scatter and transport-cost histogram data", cmd_demo_circles},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : commands) subs.push_back(app.add_subcommand(c.name, c.help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        Context ctx;
        if (!config_path.empty()) ctx.cfg = parse_run_config(read_text_file(config_path));
        if (seed) ctx.cfg.seed = *seed;
        if (out) ctx.cfg.out = *out;
        if (threads) ctx.cfg.threads = *threads;
        ctx.seeds = Seeds(ctx.cfg.seed);
        ctx.out = ctx.cfg.out;
        std::error_code ec;
        fs::create_directories(ctx.out, ec);
        if (ec) throw MissingFileError("cannot create output directory '" + ctx.out.string() + "': " + ec.message());
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (subs[i]->parsed()) return commands[i].run(ctx);
        }
        return exit_usage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const MissingFileError& e) {
        std::cerr << "missing file: " << e.what() << "\n";
        return exit_missing_file;
    } catch (const DivergenceError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    } catch (const Error& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return exit_invariant;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return exit_internal;
    }
}
