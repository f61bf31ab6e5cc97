// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "cfdhar/error.hpp"
#include "cfdhar/nn/grad_check.hpp"
#include "cfdhar/nn/losses.hpp"
#include "cfdhar/nn/mlp.hpp"
#include "cfdhar/nn/optimizer.hpp"
#include "cfdhar/nn/rng.hpp"
#include "support/finite_diff.hpp"

namespace cfdhar::nn {
namespace {

using cfdhar::testing::max_relative_error;
using cfdhar::testing::numeric_gradient;
using cfdhar::testing::reference_forward;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected cfdhar::Error";
  return ErrorCode::kIo;
}

std::vector<std::size_t> sizes(std::initializer_list<std::size_t> s) { return s; }

TEST(InitParamsTest, ShapesFollowLayerSizes) {
  auto s = sizes({3, 5, 2});
  MlpParams p = init_params(s, 11);
  ASSERT_EQ(p.num_layers(), 2u);
  EXPECT_EQ(p.weights[0].rows(), 3u);
  EXPECT_EQ(p.weights[0].cols(), 5u);
  EXPECT_EQ(p.weights[1].rows(), 5u);
  EXPECT_EQ(p.weights[1].cols(), 2u);
  EXPECT_EQ(p.biases[0].size(), 5u);
  EXPECT_EQ(p.biases[1].size(), 2u);
  for (const auto& b : p.biases) {
    for (double v : b) EXPECT_EQ(v, 0.0);
  }
}

TEST(InitParamsTest, WeightsStayWithinFanInBound) {
  auto s = sizes({16, 9, 4});
  MlpParams p = init_params(s, 3);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s[l]));
    for (double v : p.weights[l].data()) {
      EXPECT_LE(std::abs(v), bound);
    }
  }
}

TEST(InitParamsTest, SameSeedIsBitIdentical) {
  auto s = sizes({4, 7, 3});
  MlpParams a = init_params(s, 7);
  MlpParams b = init_params(s, 7);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    EXPECT_EQ(std::memcmp(a.weights[l].data().data(), b.weights[l].data().data(),
                          a.weights[l].size() * sizeof(double)),
              0);
  }
  EXPECT_EQ(a, b);
}

TEST(InitParamsTest, DifferentSeedsDiffer) {
  auto s = sizes({4, 7, 3});
  EXPECT_NE(init_params(s, 7), init_params(s, 8));
}

TEST(InitParamsTest, DegenerateLayerListsAreConfigurationErrors) {
  std::vector<std::size_t> empty;
  auto one = sizes({4});
  auto zero = sizes({4, 0, 2});
  EXPECT_EQ(code_of([&] { init_params(empty, 1); }), ErrorCode::kConfiguration);
  EXPECT_EQ(code_of([&] { init_params(one, 1); }), ErrorCode::kConfiguration);
  EXPECT_EQ(code_of([&] { init_params(zero, 1); }), ErrorCode::kConfiguration);
}

TEST(ForwardTest, ZeroNetworkGivesZeroOutput) {
  auto s = sizes({3, 4, 2});
  MlpParams p = init_params(s, 1, InitScheme::kZeros);
  std::vector<double> x{1.0, -2.0, 3.0};
  auto acts = forward(p, x);
  for (double v : acts.output().data()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardTest, ScalarAffineMap) {
  auto s = sizes({1, 1});
  MlpParams p = init_params(s, 1, InitScheme::kZeros);
  p.weights[0](0, 0) = 2.0;
  p.biases[0][0] = 1.0;
  std::vector<double> x{3.0};
  EXPECT_DOUBLE_EQ(forward(p, x).output()(0, 0), 7.0);
}

TEST(ForwardTest, ReluClampsNegativePreActivation) {
  auto s = sizes({1, 1});
  MlpParams p = init_params(s, 1, InitScheme::kZeros, Activation::kRelu, Activation::kRelu);
  p.biases[0][0] = -1.0;
  std::vector<double> x{0.0};
  EXPECT_EQ(forward(p, x).output()(0, 0), 0.0);
}

TEST(ForwardTest, MatchesLoopReference) {
  auto s = sizes({5, 8, 6, 3});
  MlpParams p = init_params(s, 21, InitScheme::kUniformFanIn, Activation::kTanh);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(5);
    for (double& v : x) v = rng.normal();
    auto expected = reference_forward(p, x);
    auto got = forward(p, x).output();
    for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_NEAR(got(0, j), expected[j], 1e-12);
  }
}

TEST(ForwardTest, InputWidthMismatchIsShapeError) {
  auto s = sizes({3, 2});
  MlpParams p = init_params(s, 1);
  std::vector<double> x{1.0, 2.0};
  EXPECT_EQ(code_of([&] { forward(p, x); }), ErrorCode::kShape);
}

TEST(BackwardTest, ZeroOutputGradientGivesZeroParameterGradients) {
  auto s = sizes({4, 3, 2});
  MlpParams p = init_params(s, 2);
  std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  auto acts = forward(p, x);
  auto res = backward(p, acts, Matrix(1, 2));
  EXPECT_EQ(res.grads.squared_norm(), 0.0);
}

TEST(BackwardTest, LinearScalarCase) {
  auto s = sizes({1, 1});
  MlpParams p = init_params(s, 1, InitScheme::kZeros);
  p.weights[0](0, 0) = 2.0;
  p.biases[0][0] = 1.0;
  std::vector<double> x{3.0};
  auto res = backward(p, forward(p, x), Matrix(1, 1, 1.0));
  EXPECT_DOUBLE_EQ(res.grads.weights[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(res.grads.biases[0][0], 1.0);
  EXPECT_DOUBLE_EQ(res.input_grad(0, 0), 2.0);
}

TEST(BackwardTest, MismatchedActivationsAreContractErrors) {
  auto s = sizes({4, 3, 2});
  auto other = sizes({4, 5, 2});
  MlpParams p = init_params(s, 2);
  MlpParams q = init_params(other, 2);
  std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  auto acts = forward(q, x);
  EXPECT_EQ(code_of([&] { backward(p, acts, Matrix(1, 2)); }), ErrorCode::kContract);
  Activations truncated = forward(p, x);
  truncated.layers.pop_back();
  EXPECT_EQ(code_of([&] { backward(p, truncated, Matrix(1, 2)); }), ErrorCode::kContract);
}

// Scalar loss used by the finite-difference comparisons: a fixed random
// projection of every output row, summed over the batch.
struct ProjectionLoss {
  Matrix inputs;
  Matrix projection;

  double operator()(const MlpParams& p) const {
    double total = 0;
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
      auto row = inputs.row(r);
      auto y = reference_forward(p, std::vector<double>(row.begin(), row.end()));
      for (std::size_t j = 0; j < y.size(); ++j) total += projection(r, j) * y[j];
    }
    return total;
  }
  MlpGrads gradient(const MlpParams& p) const {
    return backward(p, forward(p, inputs), projection).grads;
  }
};

ProjectionLoss random_problem(const MlpParams& p, std::size_t batch, Rng& rng) {
  ProjectionLoss loss{Matrix(batch, p.input_size()), Matrix(batch, p.output_size())};
  for (double& v : loss.inputs.data()) v = rng.normal();
  for (double& v : loss.projection.data()) v = rng.normal();
  return loss;
}

TEST(BackwardTest, MatchesFiniteDifferencesOnSmallNet) {
  auto s = sizes({4, 3, 2});
  MlpParams p = init_params(s, 99);
  Rng rng(99);
  auto loss = random_problem(p, 1, rng);
  auto numeric = numeric_gradient([&](const MlpParams& q) { return loss(q); }, p);
  EXPECT_LT(max_relative_error(loss.gradient(p), numeric), 1e-4);
}

// Property: up to three hidden layers of at most 64 units, 100 random points.
TEST(BackwardTest, FiniteDifferencePropertyOverRandomNets) {
  Rng rng(2024);
  for (int point = 0; point < 100; ++point) {
    const std::size_t hidden_layers = rng.uniform_index(4);
    std::vector<std::size_t> s{1 + rng.uniform_index(6)};
    for (std::size_t h = 0; h < hidden_layers; ++h) {
      // Keep most nets small; every tenth point uses the full 64-unit width.
      s.push_back(point % 10 == 0 ? 64 : 1 + rng.uniform_index(12));
    }
    s.push_back(1 + rng.uniform_index(4));
    const auto act = static_cast<Activation>(rng.uniform_index(3));
    MlpParams p = init_params(s, rng.next_u64(), InitScheme::kUniformFanIn, act);
    for (auto& b : p.biases) {
      for (double& v : b) v = 0.1 * rng.normal();
    }
    auto loss = random_problem(p, 2, rng);
    auto numeric = numeric_gradient([&](const MlpParams& q) { return loss(q); }, p);
    EXPECT_LT(max_relative_error(loss.gradient(p), numeric), 1e-4) << "point " << point;
  }
}

TEST(GradCheckTest, QuadraticPenalty) {
  auto s = sizes({3, 4, 2});
  MlpParams p = init_params(s, 4);
  GradCheckProblem problem{
      [](const MlpParams& q) {
        double total = 0;
        for (const auto& w : q.weights) {
          for (double v : w.data()) total += 0.5 * v * v;
        }
        return total;
      },
      [](const MlpParams& q) {
        MlpGrads g = MlpGrads::zeros_like(q);
        for (std::size_t l = 0; l < q.num_layers(); ++l) g.weights[l] = q.weights[l];
        return g;
      }};
  EXPECT_LT(grad_check(problem, p, 1e-5), 1e-8);
}

TEST(GradCheckTest, DetectsWrongGradient) {
  auto s = sizes({2, 2});
  MlpParams p = init_params(s, 4);
  GradCheckProblem problem{
      [](const MlpParams& q) { return q.weights[0](0, 0) * 3.0; },
      [](const MlpParams& q) { return MlpGrads::zeros_like(q); }};
  EXPECT_NEAR(grad_check(problem, p), 1.0, 1e-6);
}

TEST(GradCheckTest, NonFiniteLossIsNumericError) {
  auto s = sizes({2, 2});
  MlpParams p = init_params(s, 4);
  GradCheckProblem problem{[](const MlpParams&) { return std::nan(""); },
                           [](const MlpParams& q) { return MlpGrads::zeros_like(q); }};
  EXPECT_EQ(code_of([&] { grad_check(problem, p); }), ErrorCode::kNumeric);
}

TEST(OptimizerTest, SgdZeroGradientLeavesParametersUnchanged) {
  auto s = sizes({3, 2});
  MlpParams p = init_params(s, 5);
  MlpParams before = p;
  OptState st = OptState::make(Algorithm::kSgd, p, {.learning_rate = 0.1});
  optimizer_step(p, MlpGrads::zeros_like(p), st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step_count, 1u);
}

TEST(OptimizerTest, SgdHandArithmetic) {
  auto s = sizes({1, 1});
  MlpParams p = init_params(s, 5, InitScheme::kZeros);
  p.weights[0](0, 0) = 1.0;
  MlpGrads g = MlpGrads::zeros_like(p);
  g.weights[0](0, 0) = 0.5;
  OptState st = OptState::make(Algorithm::kSgd, p, {.learning_rate = 0.1});
  optimizer_step(p, g, st);
  EXPECT_DOUBLE_EQ(p.weights[0](0, 0), 0.95);
}

TEST(OptimizerTest, AdamFirstStepIsLearningRateSizedSignStep) {
  auto s = sizes({2, 2});
  MlpParams p = init_params(s, 5);
  MlpParams before = p;
  MlpGrads g = MlpGrads::zeros_like(p);
  g.weights[0](0, 0) = 0.37;
  g.weights[0](1, 1) = -12.0;
  OptState st = OptState::make(Algorithm::kAdam, p);
  optimizer_step(p, g, st);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.weights[0](0, 0) - before.weights[0](0, 0), -1e-3, 1e-10);
  EXPECT_NEAR(p.weights[0](1, 1) - before.weights[0](1, 1), 1e-3, 1e-10);
  EXPECT_EQ(p.weights[0](0, 1), before.weights[0](0, 1));
}

TEST(OptimizerTest, AdamZeroGradientOnlyAdvancesState) {
  auto s = sizes({3, 2});
  MlpParams p = init_params(s, 5);
  OptState st = OptState::make(Algorithm::kAdam, p);
  MlpGrads g = MlpGrads::zeros_like(p);
  g.weights[0](0, 0) = 1.0;
  optimizer_step(p, g, st);
  MlpParams after_first = p;
  const MlpGrads m_before = st.first_moment;
  optimizer_step(p, MlpGrads::zeros_like(p), st);
  EXPECT_EQ(st.step_count, 2u);
  EXPECT_NE(st.first_moment, m_before);  // decayed
  // A decaying but nonzero moment still moves that one weight; every
  // parameter whose moments are zero stays fixed.
  for (std::size_t k = 1; k < p.weights[0].size(); ++k) {
    EXPECT_EQ(p.weights[0].data()[k], after_first.weights[0].data()[k]);
  }

  MlpParams fresh = init_params(s, 6);
  MlpParams fresh_before = fresh;
  OptState st2 = OptState::make(Algorithm::kAdam, fresh);
  optimizer_step(fresh, MlpGrads::zeros_like(fresh), st2);
  EXPECT_EQ(fresh, fresh_before);
  EXPECT_EQ(st2.step_count, 1u);
}

TEST(OptimizerTest, NonFiniteGradientNamesLayer) {
  auto s = sizes({3, 2, 2});
  MlpParams p = init_params(s, 5);
  MlpParams before = p;
  MlpGrads g = MlpGrads::zeros_like(p);
  g.biases[1][0] = std::numeric_limits<double>::infinity();
  OptState st = OptState::make(Algorithm::kAdam, p);
  try {
    optimizer_step(p, g, st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  EXPECT_EQ(p, before);
}

TEST(CrossEntropyTest, UniformLogits) {
  std::vector<double> logits(4, 0.0);
  EXPECT_NEAR(softmax_cross_entropy(logits, 2).loss, std::log(4.0), 1e-12);
}

TEST(CrossEntropyTest, SaturatedCorrectClass) {
  std::vector<double> logits{0.0, 30.0, 0.0};
  EXPECT_LT(softmax_cross_entropy(logits, 1).loss, 1e-9);
}

TEST(CrossEntropyTest, TwoClassClosedForm) {
  std::vector<double> logits{1.0, 2.0};
  EXPECT_NEAR(softmax_cross_entropy(logits, 0).loss, std::log(1.0 + std::exp(1.0)), 1e-12);
}

TEST(CrossEntropyTest, StableForHugeLogits) {
  std::vector<double> logits{1000.0, -1000.0};
  auto lg = softmax_cross_entropy(logits, 1);
  EXPECT_NEAR(lg.loss, 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(lg.grad[0]));
}

TEST(CrossEntropyTest, LabelOutOfRangeIsIndexError) {
  std::vector<double> logits{1.0, 2.0};
  EXPECT_EQ(code_of([&] { softmax_cross_entropy(logits, 2); }), ErrorCode::kIndex);
}

TEST(CrossEntropyTest, LossNonNegativeAndGradientSumsToZero) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(2 + rng.uniform_index(6));
    for (double& v : logits) v = 5.0 * rng.normal();
    auto lg = softmax_cross_entropy(logits, rng.uniform_index(logits.size()));
    EXPECT_GE(lg.loss, 0.0);
    EXPECT_NEAR(std::accumulate(lg.grad.begin(), lg.grad.end(), 0.0), 0.0, 1e-12);
  }
}

TEST(CrossEntropyTest, GradientMatchesFiniteDifference) {
  std::vector<double> logits{0.3, -1.2, 2.0};
  auto lg = softmax_cross_entropy(logits, 1);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto up = logits, down = logits;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double numeric =
        (softmax_cross_entropy(up, 1).loss - softmax_cross_entropy(down, 1).loss) / 2e-6;
    EXPECT_NEAR(lg.grad[i], numeric, 1e-8);
  }
}

TEST(MseTest, IdenticalInputsGiveZero) {
  std::vector<double> x{1.0, -2.0, 0.5};
  EXPECT_EQ(mse(x, x).loss, 0.0);
}

TEST(MseTest, HandArithmetic) {
  std::vector<double> x{0.0, 0.0};
  std::vector<double> xh{1.0, 1.0};
  auto lg = mse(x, xh);
  EXPECT_DOUBLE_EQ(lg.loss, 1.0);
  EXPECT_DOUBLE_EQ(lg.grad[0], 1.0);
}

TEST(MseTest, ScalesQuadratically) {
  std::vector<double> x{0.3, -0.7, 1.1};
  std::vector<double> xh{0.1, 0.2, 0.9};
  const double base = mse(x, xh).loss;
  for (double c : {0.5, 2.0, -3.0}) {
    std::vector<double> cx, cxh;
    for (double v : x) cx.push_back(c * v);
    for (double v : xh) cxh.push_back(c * v);
    EXPECT_NEAR(mse(cx, cxh).loss, c * c * base, 1e-12);
  }
}

TEST(MseTest, ZeroExactlyWhenEqual) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(5), xh(5);
    for (double& v : x) v = rng.normal();
    xh = x;
    EXPECT_EQ(mse(x, xh).loss, 0.0);
    xh[rng.uniform_index(5)] += 1e-6;
    EXPECT_GT(mse(x, xh).loss, 0.0);
  }
}

TEST(MseTest, LengthMismatchIsShapeError) {
  std::vector<double> x{1.0};
  std::vector<double> xh{1.0, 2.0};
  EXPECT_EQ(code_of([&] { mse(x, xh); }), ErrorCode::kShape);
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs = differs || va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(RngTest, NormalMomentsAreSane) {
  Rng rng(1);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(RngTest, SplitDoesNotAdvanceParent) {
  Rng a(9);
  Rng child = a.split(3);
  EXPECT_EQ(a.counter(), 0u);
  EXPECT_NE(child.seed(), a.seed());
  EXPECT_EQ(a.split(3).next_u64(), child.next_u64());
}

}  // namespace
}  // namespace cfdhar::nn
