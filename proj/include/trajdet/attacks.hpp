#ifndef TRAJDET_ATTACKS_HPP
#define TRAJDET_ATTACKS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trajdet/autodiff.hpp"
#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/model.hpp"
#include "trajdet/parallel.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

enum class AttackKind { fgm, bim, pgd, deepfool };
enum class Norm { linf, l2 };

inline const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::fgm: return "fgm";
        case AttackKind::bim: return "bim";
        case AttackKind::pgd: return "pgd";
        case AttackKind::deepfool: return "deepfool";
    }
    return "fgm";
}

inline AttackKind parse_attack_kind(const std::string& s) {
    if (s == "fgm") return AttackKind::fgm;
    if (s == "bim") return AttackKind::bim;
    if (s == "pgd") return AttackKind::pgd;
    if (s == "deepfool") return AttackKind::deepfool;
    throw ContractError("unknown attack kind '" + s + "'");
}

inline const char* norm_name(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

inline Norm parse_norm(const std::string& s) {
    if (s == "linf" || s == "Linf") return Norm::linf;
    if (s == "l2" || s == "L2") return Norm::l2;
    throw ContractError("unknown norm '" + s + "'");
}

struct AttackConfig {
    AttackKind kind = AttackKind::fgm;
    double epsilon = 0.3;
    Norm norm = Norm::linf;
    std::size_t steps = 10;
    double step_size = 0.075;
    bool random_start = true;  // pgd only
    double overshoot = 0.02;   // deepfool only
    bool clip_deepfool = false;
    std::uint64_t seed = 0;

    /// Defaults for `kind` at budget `epsilon`: 10 steps of epsilon/4 for the
    /// iterative attacks, 100 steps for DeepFool.
    static AttackConfig defaults(AttackKind kind, double epsilon, Norm norm = Norm::linf) {
        AttackConfig c;
        c.kind = kind;
        c.epsilon = epsilon;
        c.norm = norm;
        c.steps = kind == AttackKind::deepfool ? 100 : 10;
        c.step_size = epsilon / 4.0;
        c.random_start = kind == AttackKind::pgd;
        return c;
    }

    void validate() const {
        if (kind != AttackKind::deepfool && !(epsilon > 0.0)) throw ContractError("attack epsilon must be positive");
        if (steps == 0) throw ContractError("attack steps must be positive");
        if (kind != AttackKind::fgm && kind != AttackKind::deepfool && !(step_size > 0.0)) {
            throw ContractError("attack step_size must be positive");
        }
        if (!(overshoot >= 0.0)) throw ContractError("deepfool overshoot must be non-negative");
    }
};

struct AttackResult {
    Point adversarial;
    bool success = false;
    double perturbation_norm = 0.0;
    std::size_t queries = 0;
    std::string diagnostic;  // set when the attack could not run on this sample
};

inline double perturbation_size(const Point& a, const Point& b, Norm norm) {
    Point diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    return norm == Norm::linf ? linf_norm(diff) : l2_norm(diff);
}

/// Closest point to `p` in the `norm` ball of radius `eps` around `center`.
/// Linf: componentwise clamp. L2: radial rescale.
inline void project_ball(Point& p, const Point& center, double eps, Norm norm) {
    if (norm == Norm::linf) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], center[i] - eps, center[i] + eps);
        return;
    }
    double n2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) n2 += (p[i] - center[i]) * (p[i] - center[i]);
    const double n = std::sqrt(n2);
    if (n <= eps) return;
    const double f = eps / n;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = center[i] + (p[i] - center[i]) * f;
}

/// Gradient of the cross-entropy of label `y` with respect to the input.
inline Point loss_input_gradient(const ResidualNet& net, const Point& x, std::size_t y) {
    check_dim(net, x);
    if (y >= net.num_classes()) throw IndexError("attack label " + std::to_string(y) + " out of range");
    ad::Graph g;
    const NetVars vars = register_net(g, net, false);
    const ad::Var input = g.data(Tensor::row(x));
    const auto fwd = build_forward(g, net, vars, input);
    const std::size_t labels[1] = {y};
    const ad::Var loss = g.cross_entropy(fwd.logits, labels);
    const auto grads = g.backward(loss);
    const Tensor& gx = grads[input];
    if (!gx.all_finite()) throw NumericError("input gradient is not finite");
    return Point(gx.values().begin(), gx.values().end());
}

namespace detail {

/// Unit ascent direction: sign(g) for Linf, g / |g| for L2. Zero stays zero.
inline Point ascent_direction(const Point& g, Norm norm) {
    Point d(g.size(), 0.0);
    if (norm == Norm::linf) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        return d;
    }
    const double n = l2_norm(g);
    if (n == 0.0) return d;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / n;
    return d;
}

inline AttackResult finish(const ResidualNet& net, const Point& x, Point adv, std::size_t clean_pred,
                           Norm norm, std::size_t queries) {
    AttackResult r;
    r.success = predict(net, adv) != clean_pred;
    r.perturbation_norm = perturbation_size(adv, x, norm);
    r.queries = queries + 1;
    r.adversarial = std::move(adv);
    return r;
}

/// Projected iterations shared by BIM and PGD, starting from `start`.
inline AttackResult iterate(const ResidualNet& net, const Point& x, std::size_t y, const AttackConfig& cfg,
                            const BoundingBox& box, Point start) {
    std::size_t queries = 1;
    const std::size_t clean_pred = predict(net, x);
    Point cur = std::move(start);
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const Point g = loss_input_gradient(net, cur, y);
        ++queries;
        const Point dir = ascent_direction(g, cfg.norm);
        for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += cfg.step_size * dir[i];
        project_ball(cur, x, cfg.epsilon, cfg.norm);
        box.clip(cur);
    }
    return finish(net, x, std::move(cur), clean_pred, cfg.norm, queries);
}

}  // namespace detail

/// One step of size epsilon along the loss gradient (its sign for Linf).
inline AttackResult fgm(const ResidualNet& net, const Point& x, std::size_t y, const AttackConfig& cfg,
                        const BoundingBox& box = {}) {
    cfg.validate();
    const std::size_t clean_pred = predict(net, x);
    const Point g = loss_input_gradient(net, x, y);
    const Point dir = detail::ascent_direction(g, cfg.norm);
    Point adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += cfg.epsilon * dir[i];
    box.clip(adv);
    return detail::finish(net, x, std::move(adv), clean_pred, cfg.norm, 2);
}

/// Iterated FGM with step `step_size`, projected back onto the epsilon ball
/// and the data box after every step.
inline AttackResult bim(const ResidualNet& net, const Point& x, std::size_t y, const AttackConfig& cfg,
                        const BoundingBox& box = {}) {
    cfg.validate();
    check_dim(net, x);
    return detail::iterate(net, x, y, cfg, box, x);
}

/// Uniform sample from the `norm` ball of radius `eps` around `center`.
inline Point sample_ball(const Point& center, double eps, Norm norm, Rng& rng) {
    Point p = center;
    if (norm == Norm::linf) {
        for (double& v : p) v += rng.uniform(-eps, eps);
        return p;
    }
    Point dir(center.size());
    double n = 0.0;
    while (n == 0.0) {
        for (double& v : dir) v = rng.normal();
        n = l2_norm(dir);
    }
    const double radius = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(center.size()));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += radius * dir[i] / n;
    project_ball(p, center, eps, norm);
    return p;
}

/// BIM from a uniformly random point of the epsilon ball (when random_start).
inline AttackResult pgd(const ResidualNet& net, const Point& x, std::size_t y, const AttackConfig& cfg,
                        const BoundingBox& box = {}) {
    cfg.validate();
    check_dim(net, x);
    Point start = x;
    if (cfg.random_start) {
        Rng rng(cfg.seed);
        start = sample_ball(x, cfg.epsilon, cfg.norm, rng);
        box.clip(start);
    }
    return detail::iterate(net, x, y, cfg, box, std::move(start));
}

/// Minimal-perturbation attack by repeated linearization of the decision
/// boundaries around the net's own prediction. The perturbation norm is
/// reported in L2. When `label` is given and the net already misclassifies
/// x, the attack is a no-op with success false.
inline AttackResult deepfool(const ResidualNet& net, const Point& x, const AttackConfig& cfg,
                             std::optional<std::size_t> label = std::nullopt, const BoundingBox& box = {}) {
    cfg.validate();
    check_dim(net, x);
    const std::size_t k_count = net.num_classes();
    const std::size_t clean_pred = predict(net, x);
    std::size_t queries = 1;
    if (label && *label != clean_pred) {
        AttackResult r;
        r.adversarial = x;
        r.queries = queries;
        return r;
    }

    const std::size_t d = x.size();
    Point total(d, 0.0);
    Point cur = x;
    for (std::size_t it = 0; it < cfg.steps; ++it) {
        ad::Graph g;
        const NetVars vars = register_net(g, net, false);
        const ad::Var input = g.data(Tensor::row(cur));
        const auto fwd = build_forward(g, net, vars, input);
        ++queries;
        const Tensor& logits = g.value(fwd.logits);
        if (argmax(logits.values()) != clean_pred) break;

        double best = std::numeric_limits<double>::infinity();
        Point best_w;
        for (std::size_t k = 0; k < k_count; ++k) {
            if (k == clean_pred) continue;
            Tensor sel = Tensor::zeros({1, k_count});
            sel[k] = 1.0;
            sel[clean_pred] = -1.0;
            const ad::Var diff = g.inner(fwd.logits, sel);
            const auto grads = g.backward(diff);
            const Tensor& w = grads[input];
            ++queries;
            if (!w.all_finite()) throw NumericError("deepfool gradient is not finite");
            const double wn = l2_norm(w.values());
            if (wn == 0.0) continue;
            const double dist = std::abs(g.scalar_value(diff)) / wn;
            if (dist < best) {
                best = dist;
                best_w.assign(w.values().begin(), w.values().end());
            }
        }
        if (best_w.empty()) {
            AttackResult r;
            r.adversarial = x;
            r.queries = queries;
            r.diagnostic = "deepfool: zero gradient difference for every class";
            return r;
        }
        const double wn = l2_norm(best_w);
        const double step = (best + 1e-4) / wn;
        for (std::size_t i = 0; i < d; ++i) {
            total[i] += step * best_w[i];
            cur[i] = x[i] + (1.0 + cfg.overshoot) * total[i];
        }
    }
    Point adv(d);
    for (std::size_t i = 0; i < d; ++i) adv[i] = x[i] + (1.0 + cfg.overshoot) * total[i];
    if (cfg.clip_deepfool) box.clip(adv);
    return detail::finish(net, x, std::move(adv), clean_pred, Norm::l2, queries);
}

/// Dispatches on cfg.kind. DeepFool uses `y` only for the misclassified no-op.
inline AttackResult run_attack(const ResidualNet& net, const Point& x, std::size_t y, const AttackConfig& cfg,
                               const BoundingBox& box = {}) {
    switch (cfg.kind) {
        case AttackKind::fgm: return fgm(net, x, y, cfg, box);
        case AttackKind::bim: return bim(net, x, y, cfg, box);
        case AttackKind::pgd: return pgd(net, x, y, cfg, box);
        case AttackKind::deepfool: return deepfool(net, x, cfg, y, box);
    }
    return fgm(net, x, y, cfg, box);
}

/// Attacks every sample. Sample i uses seed derive_seed(cfg.seed, i), so the
/// output does not depend on `threads`. Per-sample failures come back as
/// unsuccessful results carrying a diagnostic.
inline std::vector<AttackResult> attack_batch(const ResidualNet& net, const std::vector<Point>& xs,
                                              const std::vector<std::size_t>& ys, const AttackConfig& cfg,
                                              const BoundingBox& box = {}, std::size_t threads = 1) {
    if (xs.size() != ys.size()) throw DimensionError("attack_batch needs one label per sample");
    cfg.validate();
    std::vector<AttackResult> out(xs.size());
    parallel_for(xs.size(), threads, [&](std::size_t i) {
        AttackConfig c = cfg;
        c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
        try {
            out[i] = run_attack(net, xs[i], ys[i], c, box);
        } catch (const Error& e) {
            out[i].adversarial = xs[i];
            out[i].success = false;
            out[i].diagnostic = e.what();
        }
    });
    return out;
}

}  // namespace trajdet

#endif  // TRAJDET_ATTACKS_HPP
