// Copyright 2026 The ESCFR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "escfr/nn.h"

#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace escfr {
namespace {

using testing::RandomMatrix;
using testing::ThrownKind;

EscfrLoss MakeLoss(int n, int d, double lambda, double gamma, double kappa, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  EscfrLoss loss;
  loss.X = RandomMatrix(n, d, -1.5, 1.5, rng);
  loss.t.resize(n);
  loss.y.resize(n);
  for (int i = 0; i < n; ++i) {
    loss.t[i] = i % 3 == 0 ? 1 : 0;
    loss.y[i] = normal(rng);
  }
  loss.lambda = lambda;
  loss.gamma = gamma;
  loss.solver.epsilon = 0.5;
  loss.solver.kappa = kappa;
  loss.solver.max_iters = 2000;
  loss.solver.tol = 1e-10;
  return loss;
}

// Single-unit "identity" network on a scalar input: ELU is the identity for
// positive inputs, so a positive x flows through unchanged.
TarnetParams ScalarIdentityNetwork(double head1_output_weight) {
  TarnetParams p = InitParams(1, 0).ZerosLike();
  for (Layer& layer : p.psi) layer.weight(0, 0) = 1.0;
  for (Layer& layer : p.head0) layer.weight(0, 0) = 1.0;
  for (Layer& layer : p.head1) layer.weight(0, 0) = 1.0;
  p.head1.back().weight(0, 0) = head1_output_weight;
  return p;
}

TEST(InitParams, DeterministicPerSeed) {
  const TarnetParams a = InitParams(5, 42), b = InitParams(5, 42), c = InitParams(5, 43);
  EXPECT_EQ(a.Flatten(), b.Flatten());
  EXPECT_NE(a.Flatten(), c.Flatten());
}

TEST(InitParams, LayerShapes) {
  const TarnetParams p = InitParams(25, 0);
  ASSERT_EQ(p.psi.size(), 2u);
  ASSERT_EQ(p.head0.size(), 3u);
  ASSERT_EQ(p.head1.size(), 3u);
  EXPECT_EQ(p.psi[0].weight.rows(), 25);
  EXPECT_EQ(p.psi[0].weight.cols(), 60);
  EXPECT_EQ(p.psi[1].weight.rows(), 60);
  EXPECT_EQ(p.repr_dim(), 60);
  EXPECT_EQ(p.head0.back().weight.cols(), 1);
  for (const auto* block : {&p.psi, &p.head0, &p.head1}) {
    for (const Layer& layer : *block) {
      EXPECT_TRUE(layer.bias.isZero());
      const double bound = std::sqrt(3.0 / static_cast<double>(layer.weight.rows()));
      EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), bound);
    }
  }
  EXPECT_EQ(p.ParameterCount(), (25 * 60 + 60) + (60 * 60 + 60) +
                                    2 * ((60 * 60 + 60) + (60 * 60 + 60) + (60 + 1)));
}

TEST(InitParams, RejectsEmptyInput) {
  EXPECT_EQ(ThrownKind([] { InitParams(0, 1); }), ErrorKind::kConfig);
}

TEST(TarnetParams, FlattenRoundTrip) {
  const TarnetParams p = InitParams(3, 9);
  TarnetParams q = p.ZerosLike();
  q.Unflatten(p.Flatten());
  EXPECT_EQ(q.Flatten(), p.Flatten());
  TarnetParams r = p;
  r.ParameterAt(5) += 1.0;
  EXPECT_EQ(r.Flatten()[5], p.Flatten()[5] + 1.0);
  EXPECT_EQ(ThrownKind([&] { q.Unflatten(Vector::Zero(3)); }), ErrorKind::kShape);
}

TEST(TarnetForward, ZeroNetworkPredictsZero) {
  const TarnetParams p = InitParams(4, 1).ZerosLike();
  std::mt19937_64 rng(1);
  const ForwardResult out = TarnetForward(p, RandomMatrix(6, 4, -1, 1, rng));
  EXPECT_TRUE(out.yhat0.isZero());
  EXPECT_TRUE(out.yhat1.isZero());
  EXPECT_TRUE(PredictCate(p, RandomMatrix(6, 4, -1, 1, rng)).isZero());
}

TEST(TarnetForward, EmptyBatch) {
  const ForwardResult out = TarnetForward(InitParams(4, 1), Matrix(0, 4));
  EXPECT_EQ(out.yhat0.size(), 0);
  EXPECT_EQ(out.yhat1.size(), 0);
}

TEST(TarnetForward, DuplicatedRowsGiveDuplicatedOutputs) {
  std::mt19937_64 rng(2);
  const Matrix row = RandomMatrix(1, 3, -1, 1, rng);
  Matrix X(3, 3);
  X << row, row, row;
  const ForwardResult out = TarnetForward(InitParams(3, 5), X);
  EXPECT_NEAR(out.yhat0[0], out.yhat0[2], 1e-14);
  EXPECT_NEAR(out.yhat1[1], out.yhat1[2], 1e-14);
  EXPECT_LE((out.repr.row(0) - out.repr.row(1)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TarnetForward, Deterministic) {
  std::mt19937_64 rng(3);
  const Matrix X = RandomMatrix(10, 3, -1, 1, rng);
  const TarnetParams p = InitParams(3, 5);
  EXPECT_EQ(TarnetForward(p, X).yhat1, TarnetForward(p, X).yhat1);
}

TEST(TarnetForward, Errors) {
  const TarnetParams p = InitParams(3, 5);
  EXPECT_EQ(ThrownKind([&] { TarnetForward(p, Matrix::Zero(2, 4)); }), ErrorKind::kShape);
  Matrix bad = Matrix::Zero(2, 3);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(ThrownKind([&] { TarnetForward(p, bad); }), ErrorKind::kInput);
}

TEST(PredictCate, HandSetLinearHeads) {
  const TarnetParams p = ScalarIdentityNetwork(2.0);
  const Matrix x = Matrix::Constant(1, 1, 3.0);
  const ForwardResult out = TarnetForward(p, x);
  EXPECT_DOUBLE_EQ(out.yhat0[0], 3.0);
  EXPECT_DOUBLE_EQ(out.yhat1[0], 6.0);
  EXPECT_DOUBLE_EQ(PredictCate(p, x)[0], 3.0);
}

TEST(PredictCate, DeStandardizes) {
  TarnetParams p = ScalarIdentityNetwork(2.0);
  p.outcome_mean = 10.0;
  p.outcome_scale = 4.0;
  const Matrix x = Matrix::Constant(1, 1, 3.0);
  EXPECT_DOUBLE_EQ(PredictCate(p, x)[0], 12.0);
  const ForwardResult out = PredictOutcomes(p, x);
  EXPECT_DOUBLE_EQ(out.yhat0[0], 22.0);
  EXPECT_DOUBLE_EQ(out.yhat1[0], 34.0);
}

TEST(PredictCate, HeadSymmetry) {
  std::mt19937_64 rng(4);
  const Matrix X = RandomMatrix(8, 3, -1, 1, rng);
  TarnetParams p = InitParams(3, 7);
  TarnetParams same = p;
  same.head1 = same.head0;
  EXPECT_TRUE(PredictCate(same, X).isZero());
  TarnetParams swapped = p;
  std::swap(swapped.head0, swapped.head1);
  EXPECT_EQ(PredictCate(swapped, X), -PredictCate(p, X));
}

TEST(GradEval, ConstantLossHasZeroGradient) {
  const GradientBundle g = GradEval(InitParams(3, 1), ConstantLoss{2.5});
  EXPECT_TRUE(g.grad.Flatten().isZero());
  EXPECT_EQ(g.total, 2.5);
}

TEST(GradEval, WeightNormGradientIsTwiceWeight) {
  const TarnetParams p = InitParams(3, 1);
  const GradientBundle g = GradEval(p, WeightNormLoss{Block::kHead1, 1});
  EXPECT_EQ(g.grad.head1[1].weight, 2.0 * p.head1[1].weight);
  EXPECT_TRUE(g.grad.psi[0].weight.isZero());
  EXPECT_DOUBLE_EQ(g.total, p.head1[1].weight.squaredNorm());
  EXPECT_EQ(ThrownKind([&] { GradEval(p, WeightNormLoss{Block::kPsi, 5}); }), ErrorKind::kSpec);
}

TEST(GradCheck, LinearProbeIsExactUpToRounding) {
  std::mt19937_64 rng(5);
  const TarnetParams p = InitParams(4, 2);
  const LinearProbeLoss loss{RandomMatrix(12, 4, -1, 1, rng), RandomMatrix(12, 60, -1, 1, rng)};
  const GradCheckReport r = GradCheck(p, loss, 200, 1e-5, 1);
  EXPECT_EQ(r.samples, 200);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(GradCheck, FactualOnlyObjective) {
  const TarnetParams p = InitParams(5, 3);
  const GradCheckReport r = GradCheck(p, MakeLoss(24, 5, 0.0, 0.0, kBalancedKappa, 1), 200, 1e-5, 2);
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(GradCheck, BalancedDiscrepancyObjective) {
  const TarnetParams p = InitParams(5, 4);
  const GradCheckReport r = GradCheck(p, MakeLoss(24, 5, 1.0, 0.0, kBalancedKappa, 2), 200, 1e-5, 3);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(GradCheck, FullObjective) {
  const TarnetParams p = InitParams(5, 5);
  const GradCheckReport r = GradCheck(p, MakeLoss(24, 5, 1.0, 1.0, 2.0, 3), 200, 1e-5, 4);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(GradCheck, RejectsNonPositiveStep) {
  EXPECT_EQ(ThrownKind([] { GradCheck(InitParams(2, 1), ConstantLoss{}, 5, 0.0); }),
            ErrorKind::kConfig);
}

TEST(GradEval, LossDecomposition) {
  const TarnetParams p = InitParams(4, 6);
  const GradientBundle g = GradEval(p, MakeLoss(18, 4, 0.7, 1.0, 2.0, 6));
  ASSERT_TRUE(g.plan.has_value());
  EXPECT_NEAR(g.total - 0.7 * g.discrepancy_loss - g.factual_loss, 0.0, 1e-14);
  EXPECT_GT(g.discrepancy_loss, 0.0);
}

TEST(GradEval, LambdaZeroSkipsPlan) {
  const TarnetParams p = InitParams(4, 6);
  const GradientBundle g = GradEval(p, MakeLoss(18, 4, 0.0, 1.0, 2.0, 6));
  EXPECT_FALSE(g.plan.has_value());
  EXPECT_EQ(g.total, g.factual_loss);
  EXPECT_EQ(g.discrepancy_loss, 0.0);
}

TEST(GradEval, FrozenPlanEntersLinearly) {
  const TarnetParams p = InitParams(4, 8);
  EscfrLoss loss = MakeLoss(12, 4, 1.0, 1.0, 2.0, 8);
  const Eigen::Index n1 = 4, n0 = 8;  // every third unit is treated
  std::mt19937_64 rng(9);
  const Matrix plan = RandomMatrix(n1, n0, 0.0, 0.1, rng);

  EscfrLoss factual = loss;
  factual.lambda = 0.0;
  const Vector base = GradEval(p, factual).grad.Flatten();

  loss.frozen_plan = plan;
  const GradientBundle once = GradEval(p, loss);
  loss.frozen_plan = 2.0 * plan;
  const GradientBundle twice = GradEval(p, loss);

  EXPECT_NEAR(twice.discrepancy_loss, 2.0 * once.discrepancy_loss, 1e-12);
  const Vector d1 = once.grad.Flatten() - base, d2 = twice.grad.Flatten() - base;
  EXPECT_LE((d2 - 2.0 * d1).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, d1.cwiseAbs().maxCoeff()));

  // With a frozen plan the discrepancy is exactly <D^gamma, plan>.
  const ForwardResult fwd = TarnetForward(p, loss.X);
  Matrix r1(n1, fwd.repr.cols()), r0(n0, fwd.repr.cols());
  Vector y1(n1), y0(n0), cf1(n1), cf0(n0);
  for (Eigen::Index i = 0, a = 0, b = 0; i < loss.X.rows(); ++i) {
    if (loss.t[i] == 1) {
      r1.row(a) = fwd.repr.row(i);
      y1[a] = loss.y[i];
      cf1[a++] = fwd.yhat0[i];
    } else {
      r0.row(b) = fwd.repr.row(i);
      y0[b] = loss.y[i];
      cf0[b++] = fwd.yhat1[i];
    }
  }
  Matrix cost(n1, n0);
  for (Eigen::Index i = 0; i < n1; ++i) {
    for (Eigen::Index j = 0; j < n0; ++j) {
      cost(i, j) = (r1.row(i) - r0.row(j)).squaredNorm() +
                   loss.gamma * ((cf1[i] - y0[j]) * (cf1[i] - y0[j]) + (cf0[j] - y1[i]) * (cf0[j] - y1[i]));
    }
  }
  EXPECT_NEAR(once.discrepancy_loss, (cost.array() * plan.array()).sum(), 1e-10);
}

TEST(GradEval, SmallGroupsSkipDiscrepancy) {
  const TarnetParams p = InitParams(3, 1);
  EscfrLoss loss = MakeLoss(6, 3, 1.0, 1.0, 2.0, 10);
  loss.t = {1, 0, 0, 0, 0, 0};
  const GradientBundle g = GradEval(p, loss);
  EXPECT_FALSE(g.plan.has_value());
  EXPECT_EQ(g.discrepancy_loss, 0.0);
  loss.t = {1, 1, 0, 0, 0, 0};
  loss.skip_discrepancy = true;
  EXPECT_FALSE(GradEval(p, loss).plan.has_value());
}

TEST(GradEval, PerfectFactualFitLeavesOnlyDiscrepancy) {
  const TarnetParams p = InitParams(3, 2);
  EscfrLoss loss = MakeLoss(9, 3, 0.5, 1.0, 2.0, 11);
  const ForwardResult fwd = TarnetForward(p, loss.X);
  for (Eigen::Index i = 0; i < loss.X.rows(); ++i) loss.y[i] = loss.t[i] ? fwd.yhat1[i] : fwd.yhat0[i];
  const GradientBundle g = GradEval(p, loss);
  EXPECT_EQ(g.factual_loss, 0.0);
  EXPECT_EQ(g.total, 0.5 * g.discrepancy_loss);
}

TEST(Activation, NamesRoundTrip) {
  EXPECT_EQ(ParseActivation(ActivationName(Activation::kElu)), Activation::kElu);
  EXPECT_EQ(ParseActivation(ActivationName(Activation::kRelu)), Activation::kRelu);
  EXPECT_EQ(ThrownKind([] { ParseActivation("tanh"); }), ErrorKind::kConfig);
}

}  // namespace
}  // namespace escfr
