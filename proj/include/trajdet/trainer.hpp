#ifndef TRAJDET_TRAINER_HPP
#define TRAJDET_TRAINER_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "trajdet/autodiff.hpp"
#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/model.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

enum class TrainMode { vanilla, lap };

struct TrainConfig {
    TrainMode mode = TrainMode::vanilla;
    double learning_rate = 0.05;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double tau = 1.0;      // multiplier growth factor
    std::size_t s = 1;     // SGD steps between multiplier updates
    double lambda0 = 1.0;  // initial weight on the classification loss
    /// Step on loss + cost / lambda instead of cost + lambda * loss. Same
    /// minimizer for lambda > 0, but the step scale stays bounded as lambda grows.
    bool normalize_objective = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
        if (batch_size == 0) throw ContractError("batch_size must be positive");
        if (!(tau > 0.0)) throw ContractError("tau must be positive");
        if (s == 0) throw ContractError("s must be positive");
        if (!(lambda0 > 0.0)) throw ContractError("lambda0 must be positive");
    }
};

struct TrainReport {
    std::vector<double> loss_history;  // per-epoch mean cross-entropy
    std::vector<double> cost_history;  // per-epoch mean per-sample transport cost
    /// lambda_0, lambda_1, ... (LAP only).
    std::vector<double> lambda_trace;
    /// Batch loss used for each multiplier update: lambda_trace[i + 1] == lambda_trace[i] + tau * update_losses[i].
    std::vector<double> update_losses;
    double final_train_accuracy = 0.0;

    friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct Objective {
    double total = 0.0;
    double loss = 0.0;
    double cost = 0.0;
};

namespace detail {

struct BatchGraph {
    ad::Graph graph;
    NetVars vars;
    ad::Var loss;
    ad::Var cost;
};

/// Graph for cross-entropy and batch-mean transport cost on `batch` rows of `data`.
inline BatchGraph build_batch_graph(const ResidualNet& net, const LabeledData& data,
                                    std::span<const std::size_t> batch) {
    BatchGraph bg;
    bg.vars = register_net(bg.graph, net, true);
    std::vector<Point> xs;
    std::vector<std::size_t> ys;
    xs.reserve(batch.size());
    for (std::size_t i : batch) {
        xs.push_back(data.points[i]);
        ys.push_back(data.labels[i]);
    }
    const ad::Var input = bg.graph.constant(stack_rows(xs));
    const GraphForward fwd = build_forward(bg.graph, net, bg.vars, input);
    bg.loss = bg.graph.cross_entropy(fwd.logits, ys);
    ad::Var cost_sum = bg.graph.sum_sq(fwd.residues.front());
    for (std::size_t m = 1; m < fwd.residues.size(); ++m)
        cost_sum = bg.graph.add(cost_sum, bg.graph.sum_sq(fwd.residues[m]));
    bg.cost = bg.graph.scale(cost_sum, 1.0 / static_cast<double>(batch.size()));
    return bg;
}

inline void sgd_step(ResidualNet& net, const ad::Graph::Gradients& grads, const NetVars& vars, double lr) {
    auto params = net.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& g = grads[vars.params[p]];
        Tensor& w = *params[p];
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
}

inline void validate_training_data(const ResidualNet& net, const LabeledData& data) {
    if (data.empty()) throw ContractError("training data is empty");
    data.validate();
    if (data.dim() != net.dim()) throw DimensionError("training data dimension does not match the net");
    for (std::size_t y : data.labels) {
        if (y >= net.num_classes()) throw IndexError("training label " + std::to_string(y) + " out of range");
    }
}

}  // namespace detail

/// One multiplier step: lambda + tau * loss.
inline double multiplier_update(double lambda, double tau, double loss) { return lambda + tau * loss; }

/// cost + lambda * loss on one batch, with loss the mean cross-entropy and
/// cost the batch mean of per-sample transport cost.
inline Objective objective(const ResidualNet& net, const LabeledData& batch, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("lambda must be non-negative");
    detail::validate_training_data(net, batch);
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto bg = detail::build_batch_graph(net, batch, all);
    Objective o;
    o.loss = bg.graph.scalar_value(bg.loss);
    o.cost = bg.graph.scalar_value(bg.cost);
    o.total = o.cost + lambda * o.loss;
    return o;
}

inline double training_accuracy(const ResidualNet& net, const LabeledData& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += predict(net, data.points[i]) == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch SGD, in place.
///
/// Vanilla minimizes cross-entropy. LAP runs the method of multipliers: after
/// every `s` SGD steps on cost + lambda * loss, lambda grows by tau times the
/// cross-entropy of the current batch re-evaluated at the updated weights.
inline TrainReport train(ResidualNet& net, const LabeledData& data, const TrainConfig& cfg) {
    cfg.validate();
    detail::validate_training_data(net, data);
    TrainReport report;
    const bool lap = cfg.mode == TrainMode::lap;
    double lambda = cfg.lambda0;
    if (lap) report.lambda_trace.push_back(lambda);

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t steps_since_update = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0, cost_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            auto bg = detail::build_batch_graph(net, data, batch);
            const double loss = bg.graph.scalar_value(bg.loss);
            const double cost = bg.graph.scalar_value(bg.cost);
            if (!std::isfinite(loss) || loss > 1e6 || !std::isfinite(cost)) {
                throw DivergenceError("training diverged in epoch " + std::to_string(epoch), epoch);
            }
            loss_sum += loss * static_cast<double>(batch.size());
            cost_sum += cost * static_cast<double>(batch.size());

            if (!lap) {
                const auto grads = bg.graph.backward(bg.loss);
                detail::sgd_step(net, grads, bg.vars, cfg.learning_rate);
                continue;
            }
            const ad::Var total = cfg.normalize_objective
                                      ? bg.graph.add(bg.loss, bg.graph.scale(bg.cost, 1.0 / lambda))
                                      : bg.graph.add(bg.cost, bg.graph.scale(bg.loss, lambda));
            const auto grads = bg.graph.backward(total);
            detail::sgd_step(net, grads, bg.vars, cfg.learning_rate);
            if (++steps_since_update < cfg.s) continue;
            steps_since_update = 0;
            const auto after = detail::build_batch_graph(net, data, batch);
            const double updated_loss = after.graph.scalar_value(after.loss);
            if (!std::isfinite(updated_loss)) {
                throw DivergenceError("training diverged in epoch " + std::to_string(epoch), epoch);
            }
            lambda = multiplier_update(lambda, cfg.tau, updated_loss);
            report.update_losses.push_back(updated_loss);
            report.lambda_trace.push_back(lambda);
        }
        const double n = static_cast<double>(data.size());
        report.loss_history.push_back(loss_sum / n);
        report.cost_history.push_back(cost_sum / n);
    }
    report.final_train_accuracy = training_accuracy(net, data);
    return report;
}

}  // namespace trajdet

#endif  // TRAJDET_TRAINER_HPP
