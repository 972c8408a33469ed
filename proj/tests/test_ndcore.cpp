#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sparse_reptile/sparse_reptile.hpp"
#include "test_helpers.hpp"

using namespace sparse_reptile;

namespace {

Network single_linear(Tensor w, Tensor b) {
  Network net = Network::zeros({LayerSpec::linear(w.cols(), w.rows())});
  net.weights[0] = std::move(w);
  net.biases[0] = std::move(b);
  return net;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
  EXPECT_EQ(Tensor({2, 3}).size(), 6u);
}

TEST(Forward, IdentityLayer) {
  const auto net = single_linear(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}));
  const auto y = forward(net, Tensor::matrix({{3, 4}}));
  EXPECT_EQ(y, Tensor::matrix({{3, 4}}));
}

TEST(Forward, AffineScalar) {
  const auto net = single_linear(Tensor::matrix({{2}}), Tensor::vector({1}));
  EXPECT_EQ(forward(net, Tensor::matrix({{3}})), Tensor::matrix({{7}}));
}

TEST(Forward, ReluClampsNegatives) {
  Network net = Network::zeros({LayerSpec::linear(1, 2), LayerSpec::relu()});
  net.weights[0] = Tensor::matrix({{1}, {1}});
  net.biases[0] = Tensor::vector({-2, 1});
  EXPECT_EQ(forward(net, Tensor::matrix({{1}})), Tensor::matrix({{0, 2}}));
}

TEST(Forward, ShapeAndNumericErrors) {
  const auto net = single_linear(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}));
  EXPECT_THROW(forward(net, Tensor::matrix({{1, 2, 3}})), DimensionError);
  EXPECT_THROW(forward(net, Tensor::vector({1, 2})), DimensionError);
  const auto huge = single_linear(Tensor::matrix({{1e308}}), Tensor::vector({0}));
  EXPECT_THROW(forward(huge, Tensor::matrix({{10}})), NumericError);
}

TEST(Network, ValidatesChaining) {
  Network net = Network::zeros({LayerSpec::linear(3, 4), LayerSpec::relu(), LayerSpec::linear(4, 2)});
  EXPECT_EQ(net.layer_count(), 2u);
  EXPECT_EQ(net.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
  EXPECT_THROW(Network::zeros({LayerSpec::linear(3, 4), LayerSpec::linear(5, 2)}), DimensionError);
}

TEST(Network, InitializationBoundsAndZeroBias) {
  Rng rng(7);
  const Network net = make_mlp({10, 30, 5}, rng);
  const double lim0 = std::sqrt(6.0 / 40.0);
  for (double v : net.weights[0].data()) {
    EXPECT_LE(std::fabs(v), lim0);
  }
  for (const auto& b : net.biases) {
    EXPECT_EQ(b.count_nonzero(), 0u);
  }
}

TEST(Loss, MarginRampBoundaryAndConfidentCases) {
  const auto ramp1 = LossKind::margin_ramp(1.0);
  // Label 1 ties the strongest rival: margin 0 pays the full unit loss.
  EXPECT_DOUBLE_EQ(loss(ramp1, Tensor::matrix({{3, 3, 2}}), Labels{1}), 1.0);
  // Rival max 2 vs 3 gives margin -1 = -gamma, the zero-loss edge.
  EXPECT_DOUBLE_EQ(loss(ramp1, Tensor::matrix({{1, 3, 2}}), Labels{1}), 0.0);
  EXPECT_DOUBLE_EQ(loss(ramp1, Tensor::matrix({{5, 0, 0}}), Labels{0}), 0.0);
  // Linear segment: margin -0.5 -> 0.5.
  EXPECT_DOUBLE_EQ(loss(ramp1, Tensor::matrix({{0, 1.5, 1}}), Labels{1}), 0.5);
  EXPECT_THROW(LossKind::margin_ramp(0.0), DomainError);
}

TEST(Loss, MseOfIdenticalTensorsIsZero) {
  EXPECT_EQ(loss(LossKind::mse(), Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 2}})), 0.0);
}

TEST(Loss, CrossEntropyOfUniformPredictorIsLogC) {
  for (std::size_t c : {2u, 3u, 5u, 10u}) {
    Tensor v({4, c}, 0.37);
    EXPECT_NEAR(loss(LossKind::cross_entropy(), v, Labels{0, 1, 0, 1}), std::log(double(c)), 1e-12);
  }
}

TEST(Loss, CrossEntropyIsStableForLargeLogits) {
  const double l = loss(LossKind::cross_entropy(), Tensor::matrix({{1000, 0}}), Labels{1});
  EXPECT_NEAR(l, 1000.0, 1e-9);
}

TEST(Loss, LabelAndShapeErrors) {
  EXPECT_THROW(loss(LossKind::cross_entropy(), Tensor::matrix({{1, 2}}), Labels{2}), DomainError);
  EXPECT_THROW(loss(LossKind::cross_entropy(), Tensor::matrix({{1, 2}}), Labels{0, 1}), DimensionError);
  EXPECT_THROW(loss(LossKind::mse(), Tensor::matrix({{1, 2}}), Tensor::matrix({{1}})), DimensionError);
  EXPECT_THROW(loss(LossKind::mse(), Tensor::matrix({{1, 2}}), Labels{0}), DimensionError);
}

TEST(Loss, NonnegativeOnRandomInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    Tensor v({3, 4});
    for (double& x : v.data()) {
      x = rng.uniform(-20, 20);
    }
    const Labels y{rng.below(4), rng.below(4), rng.below(4)};
    EXPECT_GE(loss(LossKind::cross_entropy(), v, y), 0.0);
    EXPECT_GE(loss(LossKind::margin_ramp(rng.uniform(0.1, 3)), v, y), 0.0);
    EXPECT_GE(loss(LossKind::mse(), v, v), 0.0);
  }
}

TEST(Backward, HandChainRule) {
  const auto net = single_linear(Tensor::matrix({{3}}), Tensor::vector({0}));
  const auto r = backward(net, Tensor::matrix({{1}}), Tensor::matrix({{0}}), LossKind::mse());
  EXPECT_DOUBLE_EQ(r.loss, 9.0);
  EXPECT_DOUBLE_EQ(r.grads.d_weights[0][0], 6.0);
  EXPECT_DOUBLE_EQ(r.grads.d_biases[0][0], 6.0);
}

TEST(Backward, ZeroSignalGivesZeroGradients) {
  Rng rng(3);
  const Network net = test_support::random_network(rng, {3, 4, 2});
  Tensor x({5, 3});
  for (double& v : x.data()) {
    v = rng.uniform(-1, 1);
  }
  const Tensor target = forward(net, x);
  const auto r = backward(net, x, target, LossKind::mse());
  EXPECT_EQ(r.loss, 0.0);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    EXPECT_EQ(r.grads.d_weights[l].count_nonzero(), 0u);
    EXPECT_EQ(r.grads.d_biases[l].count_nonzero(), 0u);
  }
}

TEST(FiniteDiff, QuadraticIsExact) {
  const auto net = single_linear(Tensor::matrix({{3}}), Tensor::vector({0}));
  const auto g = finite_diff_grad(net, Tensor::matrix({{1}}), Tensor::matrix({{0}}), LossKind::mse(), 1e-6);
  EXPECT_NEAR(g.d_weights[0][0], 6.0, 1e-8);
  EXPECT_THROW(finite_diff_grad(net, Tensor::matrix({{1}}), Tensor::matrix({{0}}), LossKind::mse(), 0.0),
               DomainError);
}

TEST(FiniteDiff, ZeroSignalNearZero) {
  Rng rng(4);
  const Network net = test_support::random_network(rng, {3, 4, 2});
  Tensor x({5, 3});
  for (double& v : x.data()) {
    v = rng.uniform(-1, 1);
  }
  const auto g = finite_diff_grad(net, x, forward(net, x), LossKind::mse(), 1e-6);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (double v : g.d_weights[l].data()) {
      EXPECT_NEAR(v, 0.0, 1e-9);
    }
  }
}

TEST(Backward, MatchesFiniteDifferencesOnTwoLayerNet) {
  Rng rng(2024);
  test_support::RandomProblem p;
  p.kind = LossKind::cross_entropy();
  p.net = test_support::random_network(rng, {3, 4, 2});
  p.inputs = Tensor({5, 3});
  for (double& v : p.inputs.data()) {
    v = rng.uniform(-2, 2);
  }
  p.targets = Labels{0, 1, 1, 0, 1};
  ASSERT_GT(test_support::kink_distance(p), 1e-4);
  const auto exact = backward(p.net, p.inputs, p.targets, p.kind).grads;
  const auto approx = finite_diff_grad(p.net, p.inputs, p.targets, p.kind, 1e-6);
  double worst = 0;
  EXPECT_TRUE(test_support::gradients_agree(exact, approx, 1e-6, 1e-9, &worst)) << "worst rel " << worst;
}

TEST(Backward, PropertyAllLossKinds) {
  Rng rng(99);
  const LossKind kinds[] = {LossKind::cross_entropy(), LossKind::mse(), LossKind::margin_ramp(4.0)};
  for (const auto& kind : kinds) {
    int checked = 0;
    while (checked < 20) {
      auto p = test_support::random_problem(rng, kind);
      if (test_support::kink_distance(p) < 1e-4) {
        continue;
      }
      const auto exact = backward(p.net, p.inputs, p.targets, p.kind).grads;
      const auto approx = finite_diff_grad(p.net, p.inputs, p.targets, p.kind, 1e-6);
      double worst = 0;
      EXPECT_TRUE(test_support::gradients_agree(exact, approx, 1e-6, 1e-9, &worst)) << "worst rel " << worst;
      ++checked;
    }
  }
}

TEST(Backward, Deterministic) {
  Rng rng(5);
  const auto p = test_support::random_problem(rng, LossKind::cross_entropy());
  const auto a = backward(p.net, p.inputs, p.targets, p.kind);
  const auto b = backward(p.net, p.inputs, p.targets, p.kind);
  for (std::size_t l = 0; l < p.net.layer_count(); ++l) {
    EXPECT_TRUE(bitwise_equal(a.grads.d_weights[l], b.grads.d_weights[l]));
  }
}

TEST(SgdStep, Examples) {
  auto net = single_linear(Tensor::matrix({{2}}), Tensor::vector({0}));
  GradientSet g{{Tensor::matrix({{4}})}, {Tensor::vector({0})}};
  EXPECT_EQ(sgd_step(net, g, 0.5).weights[0][0], 0.0);

  auto net2 = single_linear(Tensor::matrix({{1, 1}}), Tensor::vector({0}));
  GradientSet g2{{Tensor::matrix({{1, -1}})}, {Tensor::vector({0})}};
  const auto next = sgd_step(net2, g2, 0.001);
  EXPECT_DOUBLE_EQ(next.weights[0][0], 0.999);
  EXPECT_DOUBLE_EQ(next.weights[0][1], 1.001);

  Rng rng(1);
  const Network r = test_support::random_network(rng, {3, 4, 2});
  EXPECT_TRUE(bitwise_equal(sgd_step(r, GradientSet::zeros_like(r), 0.1), r));
  EXPECT_THROW(sgd_step(r, GradientSet::zeros_like(net), 0.1), DimensionError);
  EXPECT_THROW(sgd_step(r, GradientSet::zeros_like(r), 0.0), DomainError);
}

TEST(Loss, MarginRampDominatesZeroOneLoss) {
  Rng rng(8);
  for (int i = 0; i < 20000; ++i) {
    const std::size_t c = 2 + rng.below(6);
    Tensor v({1, c});
    for (double& x : v.data()) {
      // Coarse grid so ties occur often.
      x = std::round(rng.uniform(-3, 3) * 2) / 2;
    }
    const std::size_t y = rng.below(c);
    const double zero_one = argmax(v.row(0)) != y ? 1.0 : 0.0;
    EXPECT_GE(loss(LossKind::margin_ramp(rng.uniform(0.1, 2)), v, Labels{y}), zero_one);
  }
}
