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

#include "escfr/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace escfr {
namespace {

using testing::ThrownKind;

Vector Vec(std::initializer_list<double> values) {
  Vector out(values.size());
  Eigen::Index k = 0;
  for (double v : values) out[k++] = v;
  return out;
}

// Direct quadratic-time reading of the uplift-curve definition.
double NaiveAuuc(const Vector& tau_hat, const std::vector<int>& t, const Vector& y) {
  const int n = static_cast<int>(t.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (tau_hat[a] != tau_hat[b]) return tau_hat[a] > tau_hat[b];
    return a < b;
  });
  auto uplift = [&](int k) {
    double sum1 = 0, sum0 = 0;
    int n1 = 0, n0 = 0;
    for (int r = 0; r < k; ++r) {
      const int i = order[r];
      if (t[i] == 1) {
        sum1 += y[i];
        ++n1;
      } else {
        sum0 += y[i];
        ++n0;
      }
    }
    const double m1 = n1 ? sum1 / n1 : 0.0, m0 = n0 ? sum0 / n0 : 0.0;
    return (m1 - m0) * k / static_cast<double>(n);
  };
  double area = 0.0;
  for (int k = 1; k <= n; ++k) area += uplift(k);
  const double total = uplift(n);
  return total == 0.0 ? 0.5 : (area / n) / total;
}

struct UpliftData {
  Vector tau;
  std::vector<int> t;
  Vector y;
};

UpliftData MakeUpliftData(int n, double ate_offset, double heterogeneity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  UpliftData d;
  d.tau.resize(n);
  d.y.resize(n);
  d.t.resize(n);
  for (int i = 0; i < n; ++i) {
    d.tau[i] = ate_offset + heterogeneity * normal(rng);
    d.t[i] = coin(rng) ? 1 : 0;
    d.y[i] = normal(rng) + (d.t[i] ? d.tau[i] : 0.0);
  }
  return d;
}

TEST(PeheMetrics, PerfectEstimator) {
  const PeheResult r = PeheMetrics(Vec({1, 2, 3}), Vec({1, 2, 3}));
  EXPECT_EQ(r.pehe, 0.0);
  EXPECT_EQ(r.sqrt_pehe, 0.0);
}

TEST(PeheMetrics, HandEvaluated) {
  const PeheResult r = PeheMetrics(Vec({1, 3}), Vec({0, 1}));
  EXPECT_DOUBLE_EQ(r.pehe, (1.0 + 4.0) / 2.0);
  EXPECT_NEAR(r.sqrt_pehe, 1.5811388300841898, 1e-15);
}

TEST(PeheMetrics, ConstantShiftAndScaling) {
  const Vector tau = Vec({0.3, -1.2, 2.5, 0.0});
  const PeheResult shifted = PeheMetrics(tau.array() + 0.7, tau);
  EXPECT_NEAR(shifted.pehe, 0.49, 1e-12);
  const Vector est = Vec({0.1, -1.0, 2.0, 0.4});
  const double base = PeheMetrics(est, tau).sqrt_pehe;
  EXPECT_NEAR(PeheMetrics(-3.0 * est, -3.0 * tau).sqrt_pehe, 3.0 * base, 1e-12);
  const PeheResult r = PeheMetrics(est, tau);
  EXPECT_NEAR(r.sqrt_pehe * r.sqrt_pehe, r.pehe, 1e-12 * r.pehe);
}

TEST(PeheMetrics, Errors) {
  EXPECT_EQ(ThrownKind([] { PeheMetrics(Vec({1, 2}), Vec({1})); }), ErrorKind::kShape);
  EXPECT_EQ(ThrownKind([] { PeheMetrics(Vector(), Vector()); }), ErrorKind::kInput);
}

TEST(Auuc, MatchesNaiveDefinition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const UpliftData d = MakeUpliftData(200, 1.0, 1.0, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> normal;
    Vector tau_hat(200);
    for (int i = 0; i < 200; ++i) tau_hat[i] = std::round(normal(rng) * 2.0);  // forces ties
    EXPECT_NEAR(Auuc(tau_hat, d.t, d.y), NaiveAuuc(tau_hat, d.t, d.y), 1e-12);
    EXPECT_NEAR(Auuc(d.tau, d.t, d.y), NaiveAuuc(d.tau, d.t, d.y), 1e-12);
  }
}

TEST(Auuc, ZeroTotalUpliftGivesSentinel) {
  const std::vector<int> t = {1, 0, 1, 0};
  EXPECT_EQ(Auuc(Vec({4, 3, 2, 1}), t, Vec({1, 1, 2, 2})), 0.5);
}

TEST(Auuc, RandomRankerNearHalf) {
  const UpliftData d = MakeUpliftData(4000, 1.0, 0.0, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  double sum = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Vector tau_hat(4000);
    for (int i = 0; i < 4000; ++i) tau_hat[i] = normal(rng);
    sum += Auuc(tau_hat, d.t, d.y);
  }
  EXPECT_NEAR(sum / 50.0, 0.5, 0.05);
}

TEST(Auuc, OracleRankingBeatsRandomAndReversal) {
  const UpliftData d = MakeUpliftData(4000, 1.0, 2.0, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Vector random(4000);
  for (int i = 0; i < 4000; ++i) random[i] = normal(rng);
  const double oracle = Auuc(d.tau, d.t, d.y);
  EXPECT_GT(oracle, Auuc(random, d.t, d.y));
  EXPECT_LT(Auuc(-d.tau, d.t, d.y), oracle);
}

TEST(Auuc, InvariantUnderStrictlyMonotoneTransforms) {
  const UpliftData d = MakeUpliftData(500, 0.5, 1.0, 5);
  const Vector tau_hat = d.tau + Vector::Constant(500, 0.1);
  const double base = Auuc(tau_hat, d.t, d.y);
  EXPECT_EQ(Auuc(tau_hat.array().exp(), d.t, d.y), base);
  EXPECT_EQ(Auuc(3.0 * tau_hat.array() - 7.0, d.t, d.y), base);
  EXPECT_EQ(Auuc(tau_hat.array().cube(), d.t, d.y), base);
}

TEST(Auuc, SingleGroupIsMetricError) {
  EXPECT_EQ(ThrownKind([] { Auuc(Vec({1, 2}), {1, 1}, Vec({0, 1})); }), ErrorKind::kMetric);
  EXPECT_EQ(ThrownKind([] { Auuc(Vec({1, 2}), {1, 0, 1}, Vec({0, 1})); }), ErrorKind::kShape);
}

TEST(FactualRmse, Examples) {
  EXPECT_EQ(FactualRmse(Vec({1, 2}), Vec({1, 2})), 0.0);
  EXPECT_NEAR(FactualRmse(Vec({0, 0}), Vec({3, 4})), std::sqrt(25.0 / 2.0), 1e-15);
  const double base = FactualRmse(Vec({0.5, 1.0, -2.0}), Vec({1.0, 0.0, -1.0}));
  EXPECT_NEAR(FactualRmse(Vec({5.5, 6.0, 3.0}), Vec({6.0, 5.0, 4.0})), base, 1e-12);
  EXPECT_EQ(ThrownKind([] { FactualRmse(Vec({1}), Vec({1, 2})); }), ErrorKind::kShape);
}

TEST(EvaluateEstimates, PeheAbsentWithoutTrueEffects) {
  CausalDataset data;
  data.X = Matrix::Zero(4, 1);
  data.t = {1, 0, 1, 0};
  data.y = Vec({2, 0, 3, 1});
  const MetricReport r = EvaluateEstimates(Vec({1, 1, 1, 1}), Vec({2, 0, 3, 1}), data, "test");
  EXPECT_FALSE(r.pehe.has_value());
  EXPECT_FALSE(r.sqrt_pehe.has_value());
  EXPECT_EQ(r.factual_rmse, 0.0);
  EXPECT_EQ(r.split, "test");
  data.mu0 = Vec({0, 0, 1, 1});
  data.mu1 = Vec({1, 1, 2, 2});
  data.tau = Vec({1, 1, 1, 1});
  const MetricReport full = EvaluateEstimates(Vec({1, 1, 1, 1}), Vec({2, 0, 3, 1}), data, "test");
  ASSERT_TRUE(full.sqrt_pehe.has_value());
  EXPECT_EQ(*full.sqrt_pehe, 0.0);
}

}  // namespace
}  // namespace escfr
