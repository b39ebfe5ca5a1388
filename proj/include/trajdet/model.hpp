#ifndef TRAJDET_MODEL_HPP
#define TRAJDET_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajdet/autodiff.hpp"
#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/rng.hpp"
#include "trajdet/tensor.hpp"

namespace trajdet {

/// r(x) = relu(x W1 + b1) W2 + b2, mapping R^d to R^d.
struct ResidualBlock {
    Tensor w1;  // [d x w]
    Tensor b1;  // [w]
    Tensor w2;  // [w x d]
    Tensor b2;  // [d]

    std::size_t dim() const { return w1.rows(); }
    std::size_t width() const { return w1.cols(); }
};

struct ModelConfig {
    std::size_t dim = 2;
    std::size_t width = 16;
    std::size_t blocks = 9;
    std::size_t classes = 2;
    double h = 1.0;
    double block_gain = 0.3;
};

/// Stack of residual blocks x_{m+1} = x_m + h r_m(x_m) followed by an
/// affine classification head.
class ResidualNet {
public:
    ResidualNet() = default;

    ResidualNet(std::vector<ResidualBlock> blocks, Tensor head_w, Tensor head_b, double h)
        : blocks_(std::move(blocks)), head_w_(std::move(head_w)), head_b_(std::move(head_b)), h_(h) {
        validate();
    }

    std::size_t dim() const { return head_w_.rows(); }
    std::size_t width() const { return blocks_.front().width(); }
    std::size_t num_blocks() const noexcept { return blocks_.size(); }
    std::size_t num_classes() const { return head_w_.cols(); }
    double h() const noexcept { return h_; }

    const std::vector<ResidualBlock>& blocks() const noexcept { return blocks_; }
    const Tensor& head_w() const noexcept { return head_w_; }
    const Tensor& head_b() const noexcept { return head_b_; }

    /// Every trainable tensor in a fixed order: per block (w1, b1, w2, b2), then head (w, b).
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        for (auto& b : blocks_) {
            ps.push_back(&b.w1);
            ps.push_back(&b.b1);
            ps.push_back(&b.w2);
            ps.push_back(&b.b2);
        }
        ps.push_back(&head_w_);
        ps.push_back(&head_b_);
        return ps;
    }

    std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> ps;
        for (const Tensor* p : const_cast<ResidualNet*>(this)->parameters()) ps.push_back(p);
        return ps;
    }

    void validate() const {
        if (blocks_.empty()) throw ContractError("a residual net needs at least one block");
        if (!(h_ > 0.0) || !std::isfinite(h_)) throw ContractError("step size h must be positive");
        if (head_w_.rank() != 2 || head_w_.cols() < 2) {
            throw ContractError("classification head needs at least two classes");
        }
        const std::size_t d = head_w_.rows();
        const std::size_t w = blocks_.front().width();
        for (std::size_t m = 0; m < blocks_.size(); ++m) {
            const auto& b = blocks_[m];
            const bool ok = b.w1.rank() == 2 && b.w1.rows() == d && b.w1.cols() == w && b.b1.size() == w &&
                            b.w2.rank() == 2 && b.w2.rows() == w && b.w2.cols() == d && b.b2.size() == d;
            if (!ok) {
                throw DimensionError("block " + std::to_string(m) + " does not map R^" + std::to_string(d) +
                                     " to itself with width " + std::to_string(w));
            }
        }
        if (head_b_.size() != head_w_.cols()) throw DimensionError("head bias length must equal class count");
    }

private:
    std::vector<ResidualBlock> blocks_;
    Tensor head_w_;
    Tensor head_b_;
    double h_ = 1.0;
};

namespace detail {

/// Gaussian matrix whose rows (or columns, whichever are fewer) are
/// orthonormalized by Gram-Schmidt, then multiplied by `gain`.
inline Tensor orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
    const bool by_rows = rows <= cols;
    const std::size_t count = by_rows ? rows : cols;
    const std::size_t len = by_rows ? cols : rows;
    std::vector<std::vector<double>> vs(count, std::vector<double>(len));
    for (auto& v : vs)
        for (double& e : v) e = rng.normal();
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double proj = dot(vs[i], vs[j]);
            for (std::size_t k = 0; k < len; ++k) vs[i][k] -= proj * vs[j][k];
        }
        const double n = l2_norm(vs[i]);
        for (double& e : vs[i]) e /= n;
    }
    Tensor t = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t k = 0; k < len; ++k) {
            if (by_rows)
                t(i, k) = gain * vs[i][k];
            else
                t(k, i) = gain * vs[i][k];
        }
    return t;
}

}  // namespace detail

/// Fresh net: orthogonal block weights scaled by `block_gain`, unit-gain
/// orthogonal head, zero biases.
inline ResidualNet make_net(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.blocks < 1 || cfg.classes < 2 || cfg.dim < 1 || cfg.width < 1) {
        throw ContractError("model needs blocks >= 1, classes >= 2, dim >= 1, width >= 1");
    }
    Rng rng(seed);
    std::vector<ResidualBlock> blocks;
    for (std::size_t m = 0; m < cfg.blocks; ++m) {
        ResidualBlock b;
        b.w1 = detail::orthogonal_init(cfg.dim, cfg.width, cfg.block_gain, rng);
        b.b1 = Tensor::zeros({cfg.width});
        b.w2 = detail::orthogonal_init(cfg.width, cfg.dim, cfg.block_gain, rng);
        b.b2 = Tensor::zeros({cfg.dim});
        blocks.push_back(std::move(b));
    }
    Tensor head_w = detail::orthogonal_init(cfg.dim, cfg.classes, 1.0, rng);
    return ResidualNet(std::move(blocks), std::move(head_w), Tensor::zeros({cfg.classes}), cfg.h);
}

/// Per-block record of one input's path through the net.
struct Trajectory {
    std::vector<Point> embeddings;  // x_0 .. x_M
    std::vector<Point> residues;    // r_0(x_0) .. r_{M-1}(x_{M-1})
    std::vector<double> logits;
    std::size_t predicted = 0;
};

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline void check_dim(const ResidualNet& net, std::span<const double> x) {
    if (x.size() != net.dim()) {
        throw DimensionError("input has dimension " + std::to_string(x.size()) + ", net expects " +
                             std::to_string(net.dim()));
    }
}

inline Trajectory forward(const ResidualNet& net, std::span<const double> x) {
    check_dim(net, x);
    const std::size_t d = net.dim();
    Trajectory t;
    t.embeddings.reserve(net.num_blocks() + 1);
    t.residues.reserve(net.num_blocks());
    t.embeddings.emplace_back(x.begin(), x.end());
    std::vector<double> hidden;
    for (const ResidualBlock& b : net.blocks()) {
        const Point& cur = t.embeddings.back();
        const std::size_t w = b.width();
        hidden.assign(b.b1.values().begin(), b.b1.values().end());
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < w; ++j) hidden[j] += cur[i] * b.w1(i, j);
        for (double& v : hidden) v = v > 0.0 ? v : 0.0;
        Point r(b.b2.values().begin(), b.b2.values().end());
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t i = 0; i < d; ++i) r[i] += hidden[j] * b.w2(j, i);
        Point next(d);
        for (std::size_t i = 0; i < d; ++i) next[i] = cur[i] + net.h() * r[i];
        t.residues.push_back(std::move(r));
        t.embeddings.push_back(std::move(next));
    }
    const Point& last = t.embeddings.back();
    t.logits.assign(net.head_b().values().begin(), net.head_b().values().end());
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < net.num_classes(); ++k) t.logits[k] += last[i] * net.head_w()(i, k);
    t.predicted = argmax(t.logits);
    return t;
}

inline std::size_t predict(const ResidualNet& net, std::span<const double> x) { return forward(net, x).predicted; }

/// Sum over blocks of squared residue norms.
inline double transport_cost(const Trajectory& t) {
    double c = 0.0;
    for (const Point& r : t.residues) c += squared_norm(r);
    return c;
}

struct BatchPrediction {
    std::vector<std::size_t> classes;
    std::vector<Trajectory> trajectories;
};

inline BatchPrediction predict_batch(const ResidualNet& net, const std::vector<Point>& xs) {
    BatchPrediction out;
    out.classes.reserve(xs.size());
    out.trajectories.reserve(xs.size());
    for (const Point& x : xs) {
        out.trajectories.push_back(forward(net, x));
        out.classes.push_back(out.trajectories.back().predicted);
    }
    return out;
}

/// Parameter leaves of a net registered in a graph, in `parameters()` order.
struct NetVars {
    std::vector<ad::Var> params;
};

inline NetVars register_net(ad::Graph& g, const ResidualNet& net, bool trainable) {
    NetVars vars;
    for (const Tensor* p : net.parameters()) vars.params.push_back(trainable ? g.parameter(*p) : g.constant(*p));
    return vars;
}

struct GraphForward {
    ad::Var logits;
    std::vector<ad::Var> residues;  // one [batch x d] node per block
};

/// Records the batched forward pass of `net` on the [batch x d] node `input`.
inline GraphForward build_forward(ad::Graph& g, const ResidualNet& net, const NetVars& vars, ad::Var input) {
    GraphForward out;
    ad::Var x = input;
    for (std::size_t m = 0; m < net.num_blocks(); ++m) {
        const auto* p = &vars.params[4 * m];
        const ad::Var hidden = g.relu(g.add_row(g.matmul(x, p[0]), p[1]));
        const ad::Var r = g.add_row(g.matmul(hidden, p[2]), p[3]);
        out.residues.push_back(r);
        x = g.add(x, net.h() == 1.0 ? r : g.scale(r, net.h()));
    }
    const auto* head = &vars.params[4 * net.num_blocks()];
    out.logits = g.add_row(g.matmul(x, head[0]), head[1]);
    return out;
}

/// Stacks points into a [n x d] matrix.
inline Tensor stack_rows(const std::vector<Point>& xs) {
    if (xs.empty()) throw ContractError("cannot stack an empty batch");
    const std::size_t d = xs.front().size();
    Tensor t = Tensor::zeros({xs.size(), d});
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != d) throw DimensionError("batch rows have different dimensions");
        std::copy(xs[i].begin(), xs[i].end(), t.row_span(i).begin());
    }
    return t;
}

}  // namespace trajdet

#endif  // TRAJDET_MODEL_HPP
