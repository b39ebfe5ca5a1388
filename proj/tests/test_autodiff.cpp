#include <cmath>
#include <cstddef>
#include <vector>

#include <gtest/gtest.h>

#include "trajdet/autodiff.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/rng.hpp"
#include "trajdet/tensor.hpp"

using trajdet::Rng;
using trajdet::Tensor;
namespace ad = trajdet::ad;

namespace {

Tensor random_tensor(trajdet::Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

/// Central difference of `f` at `x` along every coordinate.
std::vector<double> numeric_gradient(const ad::ScalarBuilder& f, Tensor x, double step) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        ad::Graph gp;
        const double fp = gp.scalar_value(f(gp, gp.parameter(x)));
        x[i] = orig - step;
        ad::Graph gm;
        const double fm = gm.scalar_value(f(gm, gm.parameter(x)));
        x[i] = orig;
        out[i] = (fp - fm) / (2.0 * step);
    }
    return out;
}

}  // namespace

TEST(Tensor, ConstructorRejectsBadShapesAndValues) {
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), trajdet::DimensionError);
    EXPECT_THROW(Tensor({2}, {1.0, std::nan("")}), trajdet::NumericError);
    EXPECT_THROW(Tensor::matrix({{1.0, 2.0}, {3.0}}), trajdet::DimensionError);
}

TEST(Autodiff, MatmulMatchesLoopOracle) {
    Rng rng(1);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 5}, rng);
    ad::Graph g;
    const Tensor& c = g.value(g.matmul(g.constant(a), g.constant(b)));
    ASSERT_EQ(c.shape(), (trajdet::Shape{3, 5}));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < 4; ++p) s += a(i, p) * b(p, j);
            EXPECT_DOUBLE_EQ(c(i, j), s);
        }
}

TEST(Autodiff, MatmulRejectsMismatchedInnerDimension) {
    ad::Graph g;
    const auto a = g.constant(Tensor::zeros({2, 3}));
    const auto b = g.constant(Tensor::zeros({2, 3}));
    EXPECT_THROW(g.matmul(a, b), trajdet::DimensionError);
}

TEST(Autodiff, ElementwiseOpsMatchDirectComputation) {
    const Tensor a = Tensor::matrix({{1.0, -2.0, 0.0}, {3.5, -0.5, 2.0}});
    const Tensor b = Tensor::matrix({{0.5, 0.5, 0.5}, {-1.0, 1.0, 4.0}});
    const Tensor bias = Tensor::vector({10.0, 20.0, 30.0});
    ad::Graph g;
    const auto va = g.constant(a), vb = g.constant(b);
    const Tensor sum = g.value(g.add(va, vb));
    const Tensor shifted = g.value(g.add_row(va, g.constant(bias)));
    const Tensor rel = g.value(g.relu(va));
    const Tensor scaled = g.value(g.scale(va, -3.0));
    const double sq = g.scalar_value(g.sum_sq(va));
    const double in = g.scalar_value(g.inner(va, b));
    double sq_oracle = 0.0, in_oracle = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(sum[i], a[i] + b[i]);
        EXPECT_EQ(shifted[i], a[i] + bias[i % 3]);
        EXPECT_EQ(rel[i], a[i] > 0.0 ? a[i] : 0.0);
        EXPECT_EQ(scaled[i], -3.0 * a[i]);
        sq_oracle += a[i] * a[i];
        in_oracle += a[i] * b[i];
    }
    EXPECT_DOUBLE_EQ(sq, sq_oracle);
    EXPECT_DOUBLE_EQ(in, in_oracle);
}

TEST(Autodiff, CrossEntropyMatchesLongDoubleOracle) {
    Rng rng(7);
    const Tensor z = random_tensor({6, 4}, rng);
    const std::vector<std::size_t> labels = {0, 3, 1, 2, 2, 0};
    ad::Graph g;
    const double ce = g.scalar_value(g.cross_entropy(g.constant(z), labels));
    long double total = 0.0L;
    for (std::size_t i = 0; i < 6; ++i) {
        long double denom = 0.0L;
        for (std::size_t j = 0; j < 4; ++j) denom += std::exp(static_cast<long double>(z(i, j)));
        total += std::log(denom) - static_cast<long double>(z(i, labels[i]));
    }
    EXPECT_NEAR(ce, static_cast<double>(total / 6.0L), 1e-14);
}

TEST(Autodiff, CrossEntropyStaysFiniteForHugeLogits) {
    ad::Graph g;
    const std::vector<std::size_t> labels = {1};
    const double ce = g.scalar_value(g.cross_entropy(g.constant(Tensor::matrix({{1000.0, 0.0}})), labels));
    EXPECT_TRUE(std::isfinite(ce));
    EXPECT_NEAR(ce, 1000.0, 1e-9);
}

TEST(Autodiff, CrossEntropyRejectsOutOfRangeLabel) {
    ad::Graph g;
    const std::vector<std::size_t> labels = {2};
    EXPECT_THROW(g.cross_entropy(g.constant(Tensor::matrix({{1.0, 0.0}})), labels), trajdet::IndexError);
}

TEST(Autodiff, BackwardMatchesFiniteDifferencesOnSmoothComposite) {
    Rng rng(11);
    const Tensor w = random_tensor({3, 2}, rng);
    const Tensor bias = Tensor::vector({0.3, -0.2});
    const std::vector<std::size_t> labels = {1, 0, 1, 1};
    const ad::ScalarBuilder f = [&](ad::Graph& g, ad::Var x) {
        const auto z = g.add_row(g.matmul(x, g.constant(w)), g.constant(bias));
        return g.add(g.cross_entropy(z, labels), g.scale(g.sum_sq(x), 0.1));
    };
    const Tensor x = random_tensor({4, 3}, rng);
    ad::Graph g;
    const auto leaf = g.parameter(x);
    const Tensor analytic = g.backward(f(g, leaf))[leaf];
    const auto numeric = numeric_gradient(f, x, 1e-6);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-8);
}

TEST(Autodiff, BackwardIsLinearInTheOutput) {
    Rng rng(5);
    const Tensor c = random_tensor({2, 3}, rng);
    const Tensor x = random_tensor({2, 3}, rng);
    const double alpha = 2.5, beta = -0.75;
    auto grad_of = [&](auto build) {
        ad::Graph g;
        const auto leaf = g.parameter(x);
        return g.backward(build(g, leaf))[leaf];
    };
    const Tensor gf = grad_of([&](ad::Graph& g, ad::Var v) { return g.sum_sq(v); });
    const Tensor gh = grad_of([&](ad::Graph& g, ad::Var v) { return g.inner(v, c); });
    const Tensor gsum = grad_of([&](ad::Graph& g, ad::Var v) {
        return g.add(g.scale(g.sum_sq(v), alpha), g.scale(g.inner(v, c), beta));
    });
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gsum[i], alpha * gf[i] + beta * gh[i], 1e-14);
}

TEST(Autodiff, BackwardRequiresScalarOutput) {
    ad::Graph g;
    const auto v = g.parameter(Tensor::matrix({{1.0, 2.0}}));
    EXPECT_THROW(g.backward(g.relu(v)), trajdet::ContractError);
}

TEST(Autodiff, ConstantsReceiveNoGradientAndUnusedLeavesGetZero) {
    ad::Graph g;
    const auto c = g.constant(Tensor::matrix({{1.0, 2.0}}));
    const auto p = g.parameter(Tensor::matrix({{3.0, -1.0}}));
    const auto unused = g.parameter(Tensor::matrix({{9.0}}));
    const auto grads = g.backward(g.inner(g.add(c, p), Tensor::matrix({{1.0, 1.0}})));
    EXPECT_EQ(grads[c][0], 0.0);
    EXPECT_EQ(grads[c][1], 0.0);
    EXPECT_EQ(grads[p][0], 1.0);
    EXPECT_EQ(grads[p][1], 1.0);
    EXPECT_EQ(grads[unused][0], 0.0);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
    ad::Graph g;
    const auto p = g.parameter(Tensor::matrix({{0.0, 1.0, -1.0}}));
    const auto grads = g.backward(g.inner(g.relu(p), Tensor::matrix({{1.0, 1.0, 1.0}})));
    EXPECT_EQ(grads[p][0], 0.0);
    EXPECT_EQ(grads[p][1], 1.0);
    EXPECT_EQ(grads[p][2], 0.0);
}

TEST(GradCheck, SmoothFunctionHasTinyError) {
    const ad::ScalarBuilder f = [](ad::Graph& g, ad::Var x) {
        return g.add(g.sum_sq(x), g.inner(x, Tensor::matrix({{1.0, -2.0, 0.5}})));
    };
    const auto res = ad::grad_check(f, Tensor::matrix({{0.3, -0.7, 1.1}}), 1e-5);
    EXPECT_EQ(res.checked, 3u);
    EXPECT_EQ(res.excluded, 0u);
    EXPECT_LT(res.max_relative_error, 1e-8);
}

TEST(GradCheck, CoordinateAtReluKinkIsExcluded) {
    const ad::ScalarBuilder f = [](ad::Graph& g, ad::Var x) {
        return g.inner(g.relu(x), Tensor::matrix({{1.0, 1.0}}));
    };
    const auto res = ad::grad_check(f, Tensor::matrix({{0.0, 2.0}}), 1e-6);
    EXPECT_EQ(res.excluded, 1u);
    EXPECT_EQ(res.checked, 1u);
    EXPECT_LT(res.max_relative_error, 1e-9);
}

TEST(GradCheck, RejectsNonPositiveStep) {
    const ad::ScalarBuilder f = [](ad::Graph& g, ad::Var x) { return g.sum_sq(x); };
    EXPECT_THROW(ad::grad_check(f, Tensor::matrix({{1.0}}), 0.0), trajdet::ContractError);
}
