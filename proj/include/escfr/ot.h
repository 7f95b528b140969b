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

// Discrete optimal transport: an exact transportation-simplex oracle, the
// entropic Sinkhorn solver and the generalized (unbalanced) Sinkhorn solver
// with KL-relaxed marginals. Both iterative solvers keep their dual
// potentials in the log domain so that small entropic strengths do not
// overflow.

#ifndef ESCFR_OT_H_
#define ESCFR_OT_H_

#include <limits>

#include <Eigen/Dense>

namespace escfr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Marginal-relaxation strength that selects the balanced problem.
inline constexpr double kBalancedKappa = std::numeric_limits<double>::infinity();

// Support points (one per row) with nonnegative masses.
struct DiscreteMeasure {
  Matrix points;
  Vector mass;

  // Mass 1/n on each of the n rows of `points`.
  static DiscreteMeasure Uniform(Matrix points);

  void Validate() const;
};

struct TransportPlan {
  Matrix coupling;
  double cost = 0.0;
  Vector row_marginal;
  Vector col_marginal;
  int iterations_used = 0;
  bool converged = false;
};

struct SolverConfig {
  double epsilon = 0.5;
  double kappa = kBalancedKappa;
  int max_iters = 1000;
  double tol = 1e-6;

  bool balanced() const { return kappa == kBalancedKappa; }
  void Validate() const;
};

struct PlanSummary {
  double cost = 0.0;
  Vector row_marginal;
  Vector col_marginal;
};

// Frobenius inner product <coupling, cost> plus exact row/column sums.
PlanSummary PlanCostAndMarginals(const Matrix& coupling, const Matrix& cost);

// Throws a shape error unless `cost` is rows x cols, and an input error
// unless every entry is finite and nonnegative.
void ValidateCostMatrix(const Matrix& cost, Eigen::Index rows, Eigen::Index cols);

// Exact Kantorovich solution by the transportation simplex (north-west
// corner start, MODI potentials, Bland's rule for entering and leaving
// cells). Intended as a test oracle: n, m <= 64.
TransportPlan ExactTransport(const Vector& a, const Vector& b, const Matrix& cost);

inline constexpr Eigen::Index kExactTransportMaxSize = 64;

// Entropic OT with hard marginals. Converged iff the larger of the two L1
// marginal violations is <= cfg.tol before cfg.max_iters sweeps.
TransportPlan SinkhornPlan(const Vector& a, const Vector& b, const Matrix& cost,
                           const SolverConfig& cfg);

// Entropic OT with KL-relaxed marginals of strength cfg.kappa. Dispatches to
// SinkhornPlan when cfg.kappa is kBalancedKappa. Each sweep performs the f
// half-step followed by the g half-step; converged iff the max-norm change
// of (f, g) over a sweep is <= cfg.tol.
TransportPlan UnbalancedSinkhornPlan(const Vector& a, const Vector& b,
                                     const Matrix& cost, const SolverConfig& cfg);

// Uniform mass vector of length n.
Vector UniformMass(Eigen::Index n);

}  // namespace escfr

#endif  // ESCFR_OT_H_
