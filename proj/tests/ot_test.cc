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

#include "escfr/ot.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "escfr/geometry.h"
#include "test_util.h"

namespace escfr {
namespace {

using testing::RandomMatrix;
using testing::ThrownKind;

// Minimum of <D, pi> over the transport polytope by enumerating every choice of
// n+m-1 support cells and keeping the feasible basic solutions.
double VertexEnumerationCost(const Vector& a, const Vector& b, const Matrix& cost) {
  const Eigen::Index n = a.size(), m = b.size(), cells = n * m, basis = n + m - 1;
  Matrix constraints = Matrix::Zero(n + m, cells);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      constraints(i, i * m + j) = 1.0;
      constraints(n + j, i * m + j) = 1.0;
    }
  }
  Vector rhs(n + m);
  rhs << a, b;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(cells, 0);
  std::fill(pick.end() - basis, pick.end(), 1);
  do {
    Matrix sub(n + m, basis);
    std::vector<Eigen::Index> chosen;
    for (Eigen::Index c = 0; c < cells; ++c) {
      if (pick[c]) {
        sub.col(chosen.size()) = constraints.col(c);
        chosen.push_back(c);
      }
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(sub);
    if (qr.rank() < basis) continue;
    const Vector x = qr.solve(rhs);
    if ((sub * x - rhs).norm() > 1e-9 || x.minCoeff() < -1e-12) continue;
    double value = 0.0;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      value += x[k] * cost(chosen[k] / m, chosen[k] % m);
    }
    best = std::min(best, value);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

Vector RandomMass(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  Vector mass(n);
  for (Eigen::Index i = 0; i < n; ++i) mass[i] = dist(rng);
  return mass / mass.sum();
}

SolverConfig Config(double epsilon, double kappa, int max_iters = 1000, double tol = 1e-6) {
  SolverConfig cfg;
  cfg.epsilon = epsilon;
  cfg.kappa = kappa;
  cfg.max_iters = max_iters;
  cfg.tol = tol;
  return cfg;
}

Matrix Mat2(double a, double b, double c, double d) {
  Matrix out(2, 2);
  out << a, b, c, d;
  return out;
}

Vector Vec(std::initializer_list<double> values) {
  Vector out(values.size());
  Eigen::Index k = 0;
  for (double v : values) out[k++] = v;
  return out;
}

// --- PlanCostAndMarginals ---------------------------------------------------

TEST(PlanCostAndMarginals, SingleEntry) {
  const PlanSummary s = PlanCostAndMarginals(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.7));
  EXPECT_DOUBLE_EQ(s.cost, 0.7);
  EXPECT_DOUBLE_EQ(s.row_marginal[0], 1.0);
  EXPECT_DOUBLE_EQ(s.col_marginal[0], 1.0);
}

TEST(PlanCostAndMarginals, ZeroPlan) {
  std::mt19937_64 rng(1);
  const PlanSummary s = PlanCostAndMarginals(Matrix::Zero(3, 4), RandomMatrix(3, 4, 0, 2, rng));
  EXPECT_EQ(s.cost, 0.0);
  EXPECT_TRUE(s.row_marginal.isZero());
  EXPECT_TRUE(s.col_marginal.isZero());
  EXPECT_EQ(s.row_marginal.size(), 3);
  EXPECT_EQ(s.col_marginal.size(), 4);
}

TEST(PlanCostAndMarginals, ShapeMismatch) {
  EXPECT_EQ(ThrownKind([] { PlanCostAndMarginals(Matrix::Zero(2, 3), Matrix::Zero(3, 2)); }),
            ErrorKind::kShape);
}

// --- ExactTransport ---------------------------------------------------------

TEST(ExactTransport, SinglePair) {
  const TransportPlan plan = ExactTransport(Vec({1.0}), Vec({1.0}), Matrix::Constant(1, 1, 0.7));
  EXPECT_DOUBLE_EQ(plan.coupling(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(plan.cost, 0.7);
}

TEST(ExactTransport, ZeroCostDiagonal) {
  const TransportPlan plan = ExactTransport(Vec({0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0));
  EXPECT_TRUE(plan.coupling.isApprox(Mat2(0.5, 0, 0, 0.5)));
  EXPECT_NEAR(plan.cost, 0.0, 1e-15);
}

TEST(ExactTransport, TwoByTwoMatchesPolytopeEndpoints) {
  const Vector a = Vec({0.3, 0.7}), b = Vec({0.6, 0.4});
  const Matrix D = Mat2(1, 2, 3, 1);
  // pi_11 = s parametrises the polytope; the optimum sits at an endpoint of s.
  const double lo = std::max(0.0, a[0] - b[1]), hi = std::min(a[0], b[0]);
  auto cost_at = [&](double s) {
    return s * D(0, 0) + (a[0] - s) * D(0, 1) + (b[0] - s) * D(1, 0) + (b[1] - a[0] + s) * D(1, 1);
  };
  const double oracle = std::min(cost_at(lo), cost_at(hi));
  const TransportPlan plan = ExactTransport(a, b, D);
  EXPECT_NEAR(plan.cost, oracle, 1e-12);
  EXPECT_NEAR(plan.cost, 1.6, 1e-12);
  EXPECT_TRUE(plan.coupling.isApprox(Mat2(0.3, 0.0, 0.3, 0.4), 1e-12));
}

TEST(ExactTransport, MatchesVertexEnumerationOnRandomInstances) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(1, 3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = size(rng), m = size(rng) + (trial % 2);
    const Vector a = RandomMass(n, rng), b = RandomMass(m, rng);
    const Matrix D = RandomMatrix(n, m, 0.0, 2.0, rng);
    const TransportPlan plan = ExactTransport(a, b, D);
    EXPECT_NEAR(plan.cost, VertexEnumerationCost(a, b, D), 1e-10) << "trial " << trial;
    EXPECT_LE((plan.row_marginal - a).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((plan.col_marginal - b).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_GE(plan.coupling.minCoeff(), 0.0);
  }
}

TEST(ExactTransport, NeverWorseThanProductCoupling) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector a = RandomMass(8, rng), b = RandomMass(6, rng);
    const Matrix D = RandomMatrix(8, 6, 0.0, 2.0, rng);
    const TransportPlan plan = ExactTransport(a, b, D);
    const Matrix product = a * b.transpose();
    EXPECT_LE(plan.cost, (product.array() * D.array()).sum() + 1e-12);
    EXPECT_NEAR(plan.cost, (plan.coupling.array() * D.array()).sum(), 1e-12);
  }
}

TEST(ExactTransport, DegenerateMassesTerminate) {
  // Equal partial sums make the north-west start degenerate.
  const Vector a = Vec({0.25, 0.25, 0.25, 0.25}), b = Vec({0.5, 0.5});
  Matrix D(4, 2);
  D << 1, 1, 1, 1, 1, 1, 1, 1;
  const TransportPlan plan = ExactTransport(a, b, D);
  EXPECT_NEAR(plan.cost, 1.0, 1e-12);
  EXPECT_NEAR(plan.cost, VertexEnumerationCost(a, b, D), 1e-12);
}

TEST(ExactTransport, Errors) {
  EXPECT_EQ(ThrownKind([] { ExactTransport(Vec({0.5, 0.5}), Vec({0.6, 0.5}), Mat2(0, 1, 1, 0)); }),
            ErrorKind::kInfeasibleInput);
  EXPECT_EQ(ThrownKind([] { ExactTransport(Vec({0.5, 0.5}), Vec({1.0}), Mat2(0, 1, 1, 0)); }),
            ErrorKind::kShape);
  EXPECT_EQ(ThrownKind([] {
              ExactTransport(UniformMass(65), UniformMass(2), Matrix::Zero(65, 2));
            }),
            ErrorKind::kConfig);
}

// --- SinkhornPlan -----------------------------------------------------------

TEST(SinkhornPlan, SingleUnit) {
  for (double eps : {0.01, 1.0, 100.0}) {
    const TransportPlan plan =
        SinkhornPlan(Vec({1.0}), Vec({1.0}), Matrix::Constant(1, 1, 3.0), Config(eps, kBalancedKappa));
    EXPECT_NEAR(plan.coupling(0, 0), 1.0, 1e-12);
    EXPECT_TRUE(plan.converged);
  }
}

TEST(SinkhornPlan, LargeEpsilonApproachesProductCoupling) {
  const TransportPlan plan = SinkhornPlan(Vec({0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0),
                                          Config(100.0, kBalancedKappa));
  // Symmetric 2x2 optimum: diagonal mass 0.5 / (1 + exp(-1/eps)).
  const double diagonal = 0.5 / (1.0 + std::exp(-0.01));
  EXPECT_NEAR(plan.coupling(0, 0), diagonal, 1e-9);
  EXPECT_NEAR(plan.coupling(0, 1), 0.5 - diagonal, 1e-9);
  EXPECT_LE((plan.coupling - Matrix::Constant(2, 2, 0.25)).cwiseAbs().maxCoeff(), 1.3e-3);
}

TEST(SinkhornPlan, SmallEpsilonCloseToExactCost) {
  std::mt19937_64 rng(3);
  const Matrix D = RandomMatrix(6, 6, 0.0, 2.0, rng);
  const Vector u = UniformMass(6);
  const double exact = ExactTransport(u, u, D).cost;
  const TransportPlan plan = SinkhornPlan(u, u, D, Config(0.01, kBalancedKappa, 100000));
  EXPECT_TRUE(plan.converged);
  EXPECT_LE(std::abs(plan.cost - exact), 0.02 * exact);
}

TEST(SinkhornPlan, MarginalsWithinToleranceWhenConverged) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector a = RandomMass(5, rng), b = RandomMass(7, rng);
    const TransportPlan plan =
        SinkhornPlan(a, b, RandomMatrix(5, 7, 0, 2, rng), Config(0.1, kBalancedKappa, 20000, 1e-8));
    ASSERT_TRUE(plan.converged);
    EXPECT_LE((plan.row_marginal - a).lpNorm<1>(), 1e-8);
    EXPECT_LE((plan.col_marginal - b).lpNorm<1>(), 1e-8);
    EXPECT_GE(plan.coupling.minCoeff(), 0.0);
  }
}

TEST(SinkhornPlan, ReportedFieldsAreRecomputedFromCoupling) {
  std::mt19937_64 rng(8);
  const Matrix D = RandomMatrix(4, 3, 0, 2, rng);
  const TransportPlan plan = SinkhornPlan(UniformMass(4), UniformMass(3), D, Config(0.5, kBalancedKappa));
  const PlanSummary s = PlanCostAndMarginals(plan.coupling, D);
  EXPECT_NEAR(plan.cost, s.cost, 1e-9 * std::max(1.0, std::abs(s.cost)));
  EXPECT_TRUE(plan.row_marginal.isApprox(s.row_marginal, 1e-14));
  EXPECT_TRUE(plan.col_marginal.isApprox(s.col_marginal, 1e-14));
}

TEST(SinkhornPlan, IterationCapReportsNotConverged) {
  std::mt19937_64 rng(9);
  const TransportPlan plan = SinkhornPlan(UniformMass(5), UniformMass(5),
                                          RandomMatrix(5, 5, 0, 2, rng), Config(0.01, kBalancedKappa, 1));
  EXPECT_FALSE(plan.converged);
  EXPECT_EQ(plan.iterations_used, 1);
}

TEST(SinkhornPlan, TransposeSymmetry) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector a = RandomMass(4, rng), b = RandomMass(6, rng);
    const Matrix D = RandomMatrix(4, 6, 0, 2, rng);
    const SolverConfig cfg = Config(0.2, kBalancedKappa, 200000, 1e-14);
    const TransportPlan forward = SinkhornPlan(a, b, D, cfg);
    const TransportPlan backward = SinkhornPlan(b, a, D.transpose(), cfg);
    EXPECT_LE((forward.coupling - backward.coupling.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SinkhornPlan, Deterministic) {
  std::mt19937_64 rng(17);
  const Matrix D = RandomMatrix(6, 5, 0, 2, rng);
  const SolverConfig cfg = Config(0.05, kBalancedKappa);
  const TransportPlan p1 = SinkhornPlan(UniformMass(6), UniformMass(5), D, cfg);
  const TransportPlan p2 = SinkhornPlan(UniformMass(6), UniformMass(5), D, cfg);
  EXPECT_EQ(p1.coupling, p2.coupling);
  EXPECT_EQ(p1.iterations_used, p2.iterations_used);
}

TEST(SinkhornPlan, TinyEpsilonStaysFinite) {
  std::mt19937_64 rng(19);
  const TransportPlan plan = SinkhornPlan(UniformMass(8), UniformMass(8),
                                          RandomMatrix(8, 8, 0, 200, rng), Config(1e-4, kBalancedKappa));
  EXPECT_TRUE(plan.coupling.allFinite());
}

TEST(SinkhornPlan, Errors) {
  EXPECT_EQ(ThrownKind([] {
              SinkhornPlan(Vec({0.5, 0.5}), Vec({0.7, 0.5}), Mat2(0, 1, 1, 0), Config(1, kBalancedKappa));
            }),
            ErrorKind::kInfeasibleInput);
  EXPECT_EQ(ThrownKind([] {
              SinkhornPlan(Vec({0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, -1, 1, 0), Config(1, kBalancedKappa));
            }),
            ErrorKind::kInput);
  EXPECT_EQ(ThrownKind([] {
              SinkhornPlan(Vec({0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0), Config(0, kBalancedKappa));
            }),
            ErrorKind::kConfig);
  EXPECT_EQ(ThrownKind([] {
              SinkhornPlan(Vec({0.5, 0.5}), Vec({1.0}), Mat2(0, 1, 1, 0), Config(1, kBalancedKappa));
            }),
            ErrorKind::kShape);
}

// --- UnbalancedSinkhornPlan -------------------------------------------------

TEST(UnbalancedSinkhornPlan, VanishingKappaGivesGibbsKernel) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix D = RandomMatrix(4, 5, 0, 2, rng);
    const double eps = 0.5;
    const TransportPlan plan =
        UnbalancedSinkhornPlan(UniformMass(4), UniformMass(5), D, Config(eps, 1e-12));
    const Matrix gibbs = (-D.array() / eps).exp().matrix();
    EXPECT_LE((plan.coupling - gibbs).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(UnbalancedSinkhornPlan, LargeKappaMatchesBalanced) {
  const SolverConfig balanced = Config(0.1, kBalancedKappa, 100000, 1e-12);
  const SolverConfig relaxed = Config(0.1, 1e4, 100000, 1e-12);
  const Vector u = Vec({0.5, 0.5});
  const TransportPlan p = SinkhornPlan(u, u, Mat2(0, 1, 1, 0), balanced);
  const TransportPlan q = UnbalancedSinkhornPlan(u, u, Mat2(0, 1, 1, 0), relaxed);
  EXPECT_LE((p.coupling - q.coupling).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(UnbalancedSinkhornPlan, InfiniteKappaDispatchesToBalanced) {
  std::mt19937_64 rng(29);
  const Matrix D = RandomMatrix(3, 4, 0, 2, rng);
  const SolverConfig cfg = Config(0.3, kBalancedKappa);
  const TransportPlan p = SinkhornPlan(UniformMass(3), UniformMass(4), D, cfg);
  const TransportPlan q = UnbalancedSinkhornPlan(UniformMass(3), UniformMass(4), D, cfg);
  EXPECT_EQ(p.coupling, q.coupling);
}

TEST(UnbalancedSinkhornPlan, AcceptsUnequalTotals) {
  std::mt19937_64 rng(31);
  const TransportPlan plan = UnbalancedSinkhornPlan(Vec({0.2, 0.2}), Vec({0.5, 0.4, 0.3}),
                                                    RandomMatrix(2, 3, 0, 1, rng), Config(0.5, 1.0));
  EXPECT_TRUE(plan.converged);
  EXPECT_TRUE(plan.coupling.allFinite());
  EXPECT_GE(plan.coupling.minCoeff(), 0.0);
}

TEST(UnbalancedSinkhornPlan, ZeroMassEntryCarriesNoMass) {
  std::mt19937_64 rng(37);
  const TransportPlan plan = UnbalancedSinkhornPlan(Vec({0.0, 0.5, 0.5}), UniformMass(3),
                                                    RandomMatrix(3, 3, 0, 1, rng), Config(0.5, 1.0));
  EXPECT_EQ(plan.row_marginal[0], 0.0);
  EXPECT_GT(plan.row_marginal[1], 0.0);
}

TEST(UnbalancedSinkhornPlan, OutlierCostIncreaseIsBounded) {
  // Four clustered points; the outlier sits at distance 10 from every target point.
  Matrix source(4, 2), target(4, 2);
  source << 0, 0, 0.5, 0, 0, 0.5, 0.5, 0.5;
  target << 0.1, 0.1, 0.6, 0.1, 0.1, 0.6, 0.6, 0.6;
  const double kappa = 2.0;
  const SolverConfig cfg = Config(1e-3, kappa, 500000, 1e-9);
  const TransportPlan base = UnbalancedSinkhornPlan(UniformMass(4), UniformMass(4),
                                                    PairwiseSqEuclidean(source, target), cfg);
  Matrix disturbed(5, 2);
  disturbed << source, Eigen::RowVector2d(0.35 + 10.0 / std::sqrt(2.0), 0.35 + 10.0 / std::sqrt(2.0));
  const TransportPlan outlier = UnbalancedSinkhornPlan(UniformMass(5), UniformMass(4),
                                                       PairwiseSqEuclidean(disturbed, target), cfg);
  EXPECT_LE(outlier.cost - base.cost, 2.0 * kappa / 5.0 + 0.05);
  EXPECT_LT(outlier.row_marginal[4], 0.5 * outlier.row_marginal.head(4).mean());
}

TEST(UnbalancedSinkhornPlan, TransportedMassGrowsWithKappa) {
  std::mt19937_64 rng(41);
  const Matrix D = RandomMatrix(5, 5, 0, 2, rng);
  double previous = 0.0;
  for (double kappa : {0.1, 1.0, 10.0, 100.0}) {
    const double total =
        UnbalancedSinkhornPlan(UniformMass(5), UniformMass(5), D, Config(0.1, kappa, 100000, 1e-10))
            .coupling.sum();
    EXPECT_GT(total, previous);
    previous = total;
  }
  EXPECT_NEAR(previous, 1.0, 0.05);
}

TEST(UnbalancedSinkhornPlan, TransposeSymmetry) {
  std::mt19937_64 rng(43);
  const Vector a = RandomMass(4, rng), b = RandomMass(3, rng);
  const Matrix D = RandomMatrix(4, 3, 0, 2, rng);
  const SolverConfig cfg = Config(0.2, 1.5, 200000, 1e-14);
  const TransportPlan p = UnbalancedSinkhornPlan(a, b, D, cfg);
  const TransportPlan q = UnbalancedSinkhornPlan(b, a, D.transpose(), cfg);
  EXPECT_LE((p.coupling - q.coupling.transpose()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(UnbalancedSinkhornPlan, Errors) {
  EXPECT_EQ(ThrownKind([] {
              UnbalancedSinkhornPlan(Vec({0.0, 0.0}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0), Config(1, 1));
            }),
            ErrorKind::kInfeasibleInput);
  EXPECT_EQ(ThrownKind([] {
              UnbalancedSinkhornPlan(Vec({0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0), Config(1, -1));
            }),
            ErrorKind::kConfig);
  EXPECT_EQ(ThrownKind([] {
              UnbalancedSinkhornPlan(Vec({-0.5, 0.5}), Vec({0.5, 0.5}), Mat2(0, 1, 1, 0), Config(1, 1));
            }),
            ErrorKind::kInfeasibleInput);
}

TEST(SolverConfig, Validation) {
  EXPECT_FALSE(ThrownKind([] { Config(0.5, kBalancedKappa).Validate(); }));
  EXPECT_EQ(ThrownKind([] { Config(0.5, 0.0).Validate(); }), ErrorKind::kConfig);
  EXPECT_EQ(ThrownKind([] { Config(0.5, 1.0, 0).Validate(); }), ErrorKind::kConfig);
  EXPECT_EQ(ThrownKind([] { Config(0.5, 1.0, 10, 0.0).Validate(); }), ErrorKind::kConfig);
  EXPECT_TRUE(Config(0.5, kBalancedKappa).balanced());
}

TEST(DiscreteMeasure, UniformAndValidate) {
  const DiscreteMeasure m = DiscreteMeasure::Uniform(Matrix::Zero(4, 2));
  EXPECT_TRUE(m.mass.isApprox(Vector::Constant(4, 0.25)));
  DiscreteMeasure bad = m;
  bad.mass[0] = -0.1;
  EXPECT_TRUE(ThrownKind([&] { bad.Validate(); }).has_value());
  bad.mass = Vector::Zero(4);
  EXPECT_TRUE(ThrownKind([&] { bad.Validate(); }).has_value());
  bad.mass = Vector::Constant(3, 1.0);
  EXPECT_EQ(ThrownKind([&] { bad.Validate(); }), ErrorKind::kShape);
}

}  // namespace
}  // namespace escfr
