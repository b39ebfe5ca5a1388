#ifndef TRAJDET_AUTODIFF_HPP
#define TRAJDET_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajdet/errors.hpp"
#include "trajdet/tensor.hpp"

namespace trajdet::ad {

/// Handle to a node in a Graph. Only meaningful for the graph that made it.
struct Var {
    std::size_t id = 0;
};

enum class OpKind {
    parameter,
    data,
    constant,
    matmul,
    add,
    add_row,
    relu,
    scale,
    sum_sq,
    cross_entropy,
    inner,
};

/// Tape of tensor operations recorded in evaluation order.
///
/// Nodes are appended as operations run, so parent indices always precede
/// the node and the tape is already topologically sorted. Leaves are either
/// parameters, data (both receive gradients) or constants (never do).
class Graph {
public:
    Var parameter(Tensor value) { return push_leaf(OpKind::parameter, std::move(value)); }
    Var data(Tensor value) { return push_leaf(OpKind::data, std::move(value)); }
    Var constant(Tensor value) { return push_leaf(OpKind::constant, std::move(value)); }

    Var matmul(Var a, Var b) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) {
            throw DimensionError("matmul shape mismatch: " + shape_string(x.shape()) + " and " +
                                 shape_string(y.shape()));
        }
        const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
        Tensor out = Tensor::zeros({n, m});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double xv = x(i, p);
                if (xv == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) out(i, j) += xv * y(p, j);
            }
        }
        return push(OpKind::matmul, {a.id, b.id}, std::move(out));
    }

    Var add(Var a, Var b) {
        const Tensor& x = value(a);
        const Tensor& y = value(b);
        if (x.shape() != y.shape()) {
            throw DimensionError("add shape mismatch: " + shape_string(x.shape()) + " and " +
                                 shape_string(y.shape()));
        }
        Tensor out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
        return push(OpKind::add, {a.id, b.id}, std::move(out));
    }

    /// Adds a bias (shape [1 x n] or [n]) to every row of a [b x n] matrix.
    Var add_row(Var a, Var bias) {
        const Tensor& x = value(a);
        const Tensor& r = value(bias);
        if (x.rank() != 2 || r.size() != x.cols() || (r.rank() == 2 && r.rows() != 1) || r.rank() > 2) {
            throw DimensionError("add_row shape mismatch: " + shape_string(x.shape()) + " and " +
                                 shape_string(r.shape()));
        }
        Tensor out = x;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r[j];
        }
        return push(OpKind::add_row, {a.id, bias.id}, std::move(out));
    }

    /// Elementwise max(a, 0); the subgradient at 0 is taken as 0.
    Var relu(Var a) {
        Tensor out = value(a);
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return push(OpKind::relu, {a.id}, std::move(out));
    }

    Var scale(Var a, double c) {
        Tensor out = value(a);
        for (double& v : out.values()) v *= c;
        Var r = push(OpKind::scale, {a.id}, std::move(out));
        nodes_[r.id].coefficient = c;
        return r;
    }

    Var sum_sq(Var a) {
        double s = 0.0;
        for (double v : value(a).values()) s += v * v;
        return push(OpKind::sum_sq, {a.id}, Tensor::scalar(s));
    }

    /// Scalar <a, c> with a constant tensor `c` of the same shape.
    Var inner(Var a, Tensor c) {
        const Tensor& x = value(a);
        if (x.shape() != c.shape()) {
            throw DimensionError("inner shape mismatch: " + shape_string(x.shape()) + " and " +
                                 shape_string(c.shape()));
        }
        const double s = dot(x.values(), c.values());
        Var r = push(OpKind::inner, {a.id}, Tensor::scalar(s));
        nodes_[r.id].aux = std::move(c);
        return r;
    }

    /// Mean softmax cross-entropy of a [batch x classes] logit matrix.
    Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
        const Tensor& z = value(logits);
        if (z.rank() != 2) throw DimensionError("cross_entropy expects rank-2 logits, got " + shape_string(z.shape()));
        const std::size_t b = z.rows(), k = z.cols();
        if (labels.size() != b) {
            throw DimensionError("cross_entropy batch mismatch: " + std::to_string(b) + " logit rows, " +
                                 std::to_string(labels.size()) + " labels");
        }
        Tensor probs = Tensor::zeros({b, k});
        double total = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            if (labels[i] >= k) {
                throw IndexError("label " + std::to_string(labels[i]) + " out of range for " +
                                 std::to_string(k) + " classes");
            }
            const auto row = z.row_span(i);
            const double mx = *std::max_element(row.begin(), row.end());
            double denom = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                probs(i, j) = std::exp(row[j] - mx);
                denom += probs(i, j);
            }
            for (std::size_t j = 0; j < k; ++j) probs(i, j) /= denom;
            total += (mx + std::log(denom)) - row[labels[i]];
        }
        Var r = push(OpKind::cross_entropy, {logits.id}, Tensor::scalar(total / static_cast<double>(b)));
        nodes_[r.id].aux = std::move(probs);
        nodes_[r.id].labels.assign(labels.begin(), labels.end());
        return r;
    }

    const Tensor& value(Var v) const { return node(v).value; }
    double scalar_value(Var v) const { return node(v).value[0]; }
    OpKind kind(Var v) const { return node(v).kind; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Activation pattern of every ReLU input (true where strictly positive),
    /// concatenated in tape order.
    std::vector<bool> relu_pattern() const {
        std::vector<bool> pattern;
        for (const Node& n : nodes_) {
            if (n.kind != OpKind::relu) continue;
            for (double v : nodes_[n.parents[0]].value.values()) pattern.push_back(v > 0.0);
        }
        return pattern;
    }

    /// Gradients of a scalar node with respect to every node.
    class Gradients {
    public:
        const Tensor& operator[](Var v) const { return grads_.at(v.id); }

    private:
        friend class Graph;
        std::vector<Tensor> grads_;
    };

    /// Reverse sweep from `output`, which must hold exactly one value.
    /// Leaves the output does not depend on get zero gradients.
    Gradients backward(Var output) const {
        const Tensor& out = value(output);
        if (out.size() != 1) {
            throw ContractError("backward needs a scalar output, got shape " + shape_string(out.shape()));
        }
        std::vector<Tensor> grads;
        grads.reserve(nodes_.size());
        for (const Node& n : nodes_) grads.push_back(Tensor::zeros(n.value.shape()));
        grads[output.id][0] = 1.0;

        for (std::size_t idx = output.id + 1; idx-- > 0;) {
            const Node& n = nodes_[idx];
            if (!n.needs_grad) continue;
            const Tensor& g = grads[idx];
            // Single-input ops whose input is a constant have nothing to propagate.
            if (n.parents.size() == 1 && !wants(n.parents[0])) continue;
            switch (n.kind) {
                case OpKind::parameter:
                case OpKind::data:
                case OpKind::constant:
                    break;
                case OpKind::matmul: {
                    const Tensor& a = nodes_[n.parents[0]].value;
                    const Tensor& b = nodes_[n.parents[1]].value;
                    const std::size_t rows = a.rows(), inner_dim = a.cols(), cols = b.cols();
                    if (nodes_[n.parents[0]].needs_grad) {
                        Tensor& ga = grads[n.parents[0]];
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t p = 0; p < inner_dim; ++p) {
                                double s = 0.0;
                                for (std::size_t j = 0; j < cols; ++j) s += g(i, j) * b(p, j);
                                ga(i, p) += s;
                            }
                    }
                    if (nodes_[n.parents[1]].needs_grad) {
                        Tensor& gb = grads[n.parents[1]];
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t p = 0; p < inner_dim; ++p) {
                                const double av = a(i, p);
                                if (av == 0.0) continue;
                                for (std::size_t j = 0; j < cols; ++j) gb(p, j) += av * g(i, j);
                            }
                    }
                    break;
                }
                case OpKind::add:
                    if (wants(n.parents[0])) accumulate(grads[n.parents[0]], g);
                    if (wants(n.parents[1])) accumulate(grads[n.parents[1]], g);
                    break;
                case OpKind::add_row: {
                    if (wants(n.parents[0])) accumulate(grads[n.parents[0]], g);
                    if (!wants(n.parents[1])) break;
                    Tensor& gb = grads[n.parents[1]];
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
                    break;
                }
                case OpKind::relu: {
                    const Tensor& in = nodes_[n.parents[0]].value;
                    Tensor& gi = grads[n.parents[0]];
                    for (std::size_t i = 0; i < in.size(); ++i)
                        if (in[i] > 0.0) gi[i] += g[i];
                    break;
                }
                case OpKind::scale: {
                    Tensor& gi = grads[n.parents[0]];
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += n.coefficient * g[i];
                    break;
                }
                case OpKind::sum_sq: {
                    const Tensor& in = nodes_[n.parents[0]].value;
                    Tensor& gi = grads[n.parents[0]];
                    for (std::size_t i = 0; i < in.size(); ++i) gi[i] += 2.0 * in[i] * g[0];
                    break;
                }
                case OpKind::inner: {
                    Tensor& gi = grads[n.parents[0]];
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += n.aux[i] * g[0];
                    break;
                }
                case OpKind::cross_entropy: {
                    Tensor& gi = grads[n.parents[0]];
                    const std::size_t b = n.aux.rows();
                    const double w = g[0] / static_cast<double>(b);
                    for (std::size_t i = 0; i < b; ++i) {
                        for (std::size_t j = 0; j < n.aux.cols(); ++j) {
                            const double target = j == n.labels[i] ? 1.0 : 0.0;
                            gi(i, j) += w * (n.aux(i, j) - target);
                        }
                    }
                    break;
                }
            }
        }
        Gradients result;
        result.grads_ = std::move(grads);
        return result;
    }

private:
    struct Node {
        OpKind kind = OpKind::constant;
        std::vector<std::size_t> parents;
        Tensor value;
        bool needs_grad = false;
        double coefficient = 0.0;
        Tensor aux;
        std::vector<std::size_t> labels;
    };

    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw IndexError("unknown graph node " + std::to_string(v.id));
        return nodes_[v.id];
    }

    Var push_leaf(OpKind kind, Tensor value) {
        Node n;
        n.kind = kind;
        n.value = std::move(value);
        n.needs_grad = kind != OpKind::constant;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    Var push(OpKind kind, std::vector<std::size_t> parents, Tensor value) {
        Node n;
        n.kind = kind;
        n.parents = std::move(parents);
        n.value = std::move(value);
        for (std::size_t p : n.parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    bool wants(std::size_t id) const { return nodes_[id].needs_grad; }

    static void accumulate(Tensor& into, const Tensor& g) {
        for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
    }

    std::vector<Node> nodes_;
};

/// Builds a scalar function of one leaf inside a fresh graph.
using ScalarBuilder = std::function<Var(Graph&, Var)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose +/- step perturbations straddle a ReLU kink.
    std::size_t excluded = 0;
};

/// Compares backward() against central differences of step `step`.
///
/// A coordinate is skipped when the ReLU activation pattern at x + step e_i
/// differs from the one at x - step e_i: some pre-activation lies within the
/// step of zero and the difference quotient straddles a kink.
inline GradCheckResult grad_check(const ScalarBuilder& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw ContractError("grad_check step must be positive");
    Graph g;
    const Var leaf = g.parameter(x);
    const Var out = f(g, leaf);
    const Tensor analytic = g.backward(out)[leaf];

    auto evaluate = [&](const Tensor& at, std::vector<bool>& pattern) {
        Graph h;
        const Var v = f(h, h.parameter(at));
        pattern = h.relu_pattern();
        return h.scalar_value(v);
    };

    GradCheckResult res;
    Tensor probe = x;
    std::vector<bool> plus_pattern, minus_pattern;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double fp = evaluate(probe, plus_pattern);
        probe[i] = x[i] - step;
        const double fm = evaluate(probe, minus_pattern);
        probe[i] = x[i];
        if (plus_pattern != minus_pattern) {
            ++res.excluded;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        res.max_relative_error = std::max(res.max_relative_error, err);
        ++res.checked;
    }
    return res;
}

}  // namespace trajdet::ad

#endif  // TRAJDET_AUTODIFF_HPP
