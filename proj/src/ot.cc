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

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "escfr/status.h"

namespace escfr {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogSumExp(const double* values, Eigen::Index count) {
  double max_value = kNegInf;
  for (Eigen::Index k = 0; k < count; ++k) max_value = std::max(max_value, values[k]);
  if (max_value == kNegInf) return kNegInf;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < count; ++k) sum += std::exp(values[k] - max_value);
  return max_value + std::log(sum);
}

void ValidateMass(const Vector& mass, const char* name) {
  Require(mass.size() > 0, ErrorKind::kShape, std::string(name) + " is empty");
  bool any_positive = false;
  for (Eigen::Index i = 0; i < mass.size(); ++i) {
    Require(std::isfinite(mass[i]) && mass[i] >= 0.0, ErrorKind::kInfeasibleInput,
            std::string(name) + " has a negative or non-finite entry");
    any_positive = any_positive || mass[i] > 0.0;
  }
  Require(any_positive, ErrorKind::kInfeasibleInput, std::string(name) + " has zero total mass");
}

Vector LogMass(const Vector& mass) {
  Vector out(mass.size());
  for (Eigen::Index i = 0; i < mass.size(); ++i) {
    out[i] = mass[i] > 0.0 ? std::log(mass[i]) : kNegInf;
  }
  return out;
}

// A potential is admissible if it is finite, or -inf on a zero-mass support.
void CheckPotential(const Vector& potential, const Vector& log_mass, int iteration,
                    const char* name) {
  for (Eigen::Index i = 0; i < potential.size(); ++i) {
    const double value = potential[i];
    const bool ok = std::isfinite(value) || (value == kNegInf && log_mass[i] == kNegInf);
    if (!ok) {
      Fail(ErrorKind::kNumericalFailure, std::string("non-finite potential ") + name +
                                             " at iteration " + std::to_string(iteration));
    }
  }
}

TransportPlan AssemblePlan(const Vector& f, const Vector& g, const RowMatrix& cost,
                           const Matrix& original_cost, double epsilon, int iterations) {
  const Eigen::Index n = f.size();
  const Eigen::Index m = g.size();
  TransportPlan plan;
  plan.coupling.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      plan.coupling(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
    }
  }
  if (!plan.coupling.allFinite()) {
    Fail(ErrorKind::kNumericalFailure,
         "non-finite coupling at iteration " + std::to_string(iterations));
  }
  PlanSummary summary = PlanCostAndMarginals(plan.coupling, original_cost);
  plan.cost = summary.cost;
  plan.row_marginal = std::move(summary.row_marginal);
  plan.col_marginal = std::move(summary.col_marginal);
  plan.iterations_used = iterations;
  return plan;
}

// Dual objective of the entropic problem. kappa = inf gives the balanced dual
// <f,a> + <g,b> - eps * sum(pi); finite kappa replaces the linear terms with
// -kappa * <a, exp(-f/kappa)> and the same for g.
double DualObjective(const Vector& f, const Vector& g, const Vector& a, const Vector& b,
                     const RowMatrix& cost, double eps, double kappa) {
  double mass = 0.0;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) mass += std::exp((f[i] + g[j] - cost(i, j)) / eps);
  }
  double linear = 0.0;
  if (std::isinf(kappa)) {
    linear = f.dot(a) + g.dot(b);
  } else {
    linear = -kappa * (a.array() * (-f.array() / kappa).exp()).sum() -
             kappa * (b.array() * (-g.array() / kappa).exp()).sum();
  }
  return linear - eps * mass;
}

// One damped Newton ascent step on the dual potentials. The balanced dual is
// invariant under (f + c, g - c), so the last g is held fixed there. Steps
// that fail to increase the dual are discarded.
void NewtonStep(Vector& f, Vector& g, const Vector& a, const Vector& b, const RowMatrix& cost,
                double eps, double kappa) {
  const Eigen::Index n = f.size();
  const Eigen::Index m = g.size();
  const bool balanced = std::isinf(kappa);
  Matrix plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
  }
  Vector row_target = a;
  Vector col_target = b;
  if (!balanced) {
    row_target = (a.array() * (-f.array() / kappa).exp()).matrix();
    col_target = (b.array() * (-g.array() / kappa).exp()).matrix();
  }
  const Eigen::Index free_cols = balanced ? m - 1 : m;
  const Eigen::Index size = n + free_cols;
  Matrix hessian = Matrix::Zero(size, size);
  Vector gradient(size);
  const Vector rows = plan.rowwise().sum();
  const Vector cols = plan.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    hessian(i, i) = rows[i] / eps + (balanced ? 0.0 : row_target[i] / kappa);
    gradient[i] = row_target[i] - rows[i];
    for (Eigen::Index j = 0; j < free_cols; ++j) {
      hessian(i, n + j) = plan(i, j) / eps;
      hessian(n + j, i) = plan(i, j) / eps;
    }
  }
  for (Eigen::Index j = 0; j < free_cols; ++j) {
    hessian(n + j, n + j) = cols[j] / eps + (balanced ? 0.0 : col_target[j] / kappa);
    gradient[n + j] = col_target[j] - cols[j];
  }
  const Vector step = hessian.ldlt().solve(gradient);
  if (!step.allFinite()) return;
  const double base = DualObjective(f, g, a, b, cost, eps, kappa);
  for (double t = 1.0; t > 1e-6; t *= 0.5) {
    Vector f_try = f + t * step.head(n);
    Vector g_try = g;
    g_try.head(free_cols) += t * step.tail(free_cols);
    if (DualObjective(f_try, g_try, a, b, cost, eps, kappa) > base) {
      f = std::move(f_try);
      g = std::move(g_try);
      return;
    }
  }
}

// Newton steps start after this many plain sweeps and repeat at this period,
// on problems with at most kNewtonMaxSize potentials and strictly positive mass.
constexpr int kNewtonStart = 100;
constexpr int kNewtonPeriod = 10;
constexpr Eigen::Index kNewtonMaxSize = 256;

bool NewtonEligible(const Vector& a, const Vector& b) {
  return a.size() + b.size() <= kNewtonMaxSize && (a.array() > 0.0).all() &&
         (b.array() > 0.0).all();
}

bool NewtonDue(int sweeps) {
  return sweeps >= kNewtonStart && sweeps % kNewtonPeriod == 0;
}

}  // namespace

DiscreteMeasure DiscreteMeasure::Uniform(Matrix points) {
  DiscreteMeasure measure;
  measure.mass = UniformMass(points.rows());
  measure.points = std::move(points);
  return measure;
}

void DiscreteMeasure::Validate() const {
  Require(points.rows() == mass.size(), ErrorKind::kShape,
          "measure has " + std::to_string(points.rows()) + " points but " +
              std::to_string(mass.size()) + " masses");
  ValidateMass(mass, "mass");
}

Vector UniformMass(Eigen::Index n) {
  Require(n > 0, ErrorKind::kShape, "uniform mass over an empty support");
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

void SolverConfig::Validate() const {
  Require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::kConfig,
          "epsilon must be positive and finite");
  Require(kappa > 0.0 && !std::isnan(kappa), ErrorKind::kConfig,
          "kappa must be positive (or the balanced sentinel)");
  Require(max_iters >= 1, ErrorKind::kConfig, "max_iters must be >= 1");
  Require(tol > 0.0, ErrorKind::kConfig, "tol must be positive");
}

PlanSummary PlanCostAndMarginals(const Matrix& coupling, const Matrix& cost) {
  Require(coupling.rows() == cost.rows() && coupling.cols() == cost.cols(), ErrorKind::kShape,
          "coupling is " + std::to_string(coupling.rows()) + "x" +
              std::to_string(coupling.cols()) + " but cost is " +
              std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()));
  PlanSummary summary;
  summary.cost = coupling.cwiseProduct(cost).sum();
  summary.row_marginal = coupling.rowwise().sum();
  summary.col_marginal = coupling.colwise().sum().transpose();
  return summary;
}

void ValidateCostMatrix(const Matrix& cost, Eigen::Index rows, Eigen::Index cols) {
  Require(cost.rows() == rows && cost.cols() == cols, ErrorKind::kShape,
          "cost matrix is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
              ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  Require(cost.allFinite(), ErrorKind::kInput, "cost matrix has non-finite entries");
  Require((cost.array() >= 0.0).all(), ErrorKind::kInput, "cost matrix has negative entries");
}

// ---------------------------------------------------------------------------
// Transportation simplex.

namespace {

struct Cell {
  Eigen::Index row;
  Eigen::Index col;
};

// Path of basic cells connecting column node `col` to row node `row` in the
// spanning tree formed by the basis. Nodes 0..n-1 are rows, n..n+m-1 columns.
std::vector<int> TreePath(const std::vector<Cell>& basis, Eigen::Index n, Eigen::Index m,
                          Eigen::Index row, Eigen::Index col) {
  const Eigen::Index nodes = n + m;
  std::vector<std::vector<std::pair<Eigen::Index, int>>> adjacency(nodes);
  for (int k = 0; k < static_cast<int>(basis.size()); ++k) {
    adjacency[basis[k].row].push_back({n + basis[k].col, k});
    adjacency[n + basis[k].col].push_back({basis[k].row, k});
  }
  std::vector<int> via(nodes, -1);
  std::vector<Eigen::Index> parent(nodes, -1);
  std::vector<bool> seen(nodes, false);
  std::deque<Eigen::Index> queue{n + col};
  seen[n + col] = true;
  while (!queue.empty()) {
    const Eigen::Index node = queue.front();
    queue.pop_front();
    if (node == row) break;
    for (const auto& [next, cell] : adjacency[node]) {
      if (seen[next]) continue;
      seen[next] = true;
      parent[next] = node;
      via[next] = cell;
      queue.push_back(next);
    }
  }
  if (!seen[row]) Fail(ErrorKind::kNumericalFailure, "transport basis is not a spanning tree");
  std::vector<int> path;
  for (Eigen::Index node = row; node != n + col; node = parent[node]) path.push_back(via[node]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

TransportPlan ExactTransport(const Vector& a, const Vector& b, const Matrix& cost) {
  ValidateMass(a, "a");
  ValidateMass(b, "b");
  const Eigen::Index n = a.size();
  const Eigen::Index m = b.size();
  ValidateCostMatrix(cost, n, m);
  Require(n <= kExactTransportMaxSize && m <= kExactTransportMaxSize, ErrorKind::kConfig,
          "exact transport is limited to 64x64 instances");
  const double total = a.sum();
  Require(std::abs(total - b.sum()) <= 1e-9 * std::max(1.0, total), ErrorKind::kInfeasibleInput,
          "total masses differ");

  Matrix flow = Matrix::Zero(n, m);
  std::vector<Cell> basis;
  basis.reserve(n + m - 1);
  {
    Vector supply = a;
    Vector demand = b;
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    while (true) {
      const double amount = std::min(supply[i], demand[j]);
      flow(i, j) = amount;
      basis.push_back({i, j});
      const bool row_first = supply[i] <= demand[j];
      supply[i] -= amount;
      demand[j] -= amount;
      if (i == n - 1 && j == m - 1) break;
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (row_first) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const double threshold = 1e-12 * std::max(1.0, cost.maxCoeff());
  std::vector<std::vector<bool>> is_basic(n, std::vector<bool>(m, false));
  for (const Cell& c : basis) is_basic[c.row][c.col] = true;

  int pivots = 0;
  constexpr int kMaxPivots = 1000000;
  Vector u(n);
  Vector v(m);
  while (true) {
    // MODI potentials: u_i + v_j = c_ij on basic cells, u_0 = 0.
    std::vector<bool> row_set(n, false);
    std::vector<bool> col_set(m, false);
    u.setZero();
    v.setZero();
    row_set[0] = true;
    for (std::size_t assigned = 1; assigned < static_cast<std::size_t>(n + m);) {
      std::size_t before = assigned;
      for (const Cell& c : basis) {
        if (row_set[c.row] && !col_set[c.col]) {
          v[c.col] = cost(c.row, c.col) - u[c.row];
          col_set[c.col] = true;
          ++assigned;
        } else if (!row_set[c.row] && col_set[c.col]) {
          u[c.row] = cost(c.row, c.col) - v[c.col];
          row_set[c.row] = true;
          ++assigned;
        }
      }
      if (assigned == before) {
        Fail(ErrorKind::kNumericalFailure, "transport basis is disconnected");
      }
    }

    // Bland's rule: first improving cell in row-major order enters.
    Eigen::Index enter_row = -1;
    Eigen::Index enter_col = -1;
    for (Eigen::Index i = 0; i < n && enter_row < 0; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (is_basic[i][j]) continue;
        if (cost(i, j) - u[i] - v[j] < -threshold) {
          enter_row = i;
          enter_col = j;
          break;
        }
      }
    }
    if (enter_row < 0) break;
    if (++pivots > kMaxPivots) {
      Fail(ErrorKind::kNumericalFailure, "transportation simplex exceeded pivot limit");
    }

    // Cycle: entering cell (+), then the tree path from its column back to
    // its row with alternating signs starting at (-).
    const std::vector<int> path = TreePath(basis, n, m, enter_row, enter_col);
    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const Cell& c = basis[path[k]];
      const double value = flow(c.row, c.col);
      const bool better = value < theta;
      const bool tie_lower = value == theta &&
                             (c.row * m + c.col) < (basis[leave].row * m + basis[leave].col);
      if (better || tie_lower) {
        theta = value;
        leave = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      const Cell& c = basis[path[k]];
      flow(c.row, c.col) += (k % 2 == 0) ? -theta : theta;
    }
    flow(enter_row, enter_col) = theta;
    const Cell leaving = basis[leave];
    flow(leaving.row, leaving.col) = 0.0;
    is_basic[leaving.row][leaving.col] = false;
    is_basic[enter_row][enter_col] = true;
    basis[leave] = {enter_row, enter_col};
  }

  TransportPlan plan;
  plan.coupling = flow.cwiseMax(0.0);
  PlanSummary summary = PlanCostAndMarginals(plan.coupling, cost);
  plan.cost = summary.cost;
  plan.row_marginal = std::move(summary.row_marginal);
  plan.col_marginal = std::move(summary.col_marginal);
  plan.iterations_used = pivots;
  plan.converged = true;
  return plan;
}

// ---------------------------------------------------------------------------
// Sinkhorn.

TransportPlan SinkhornPlan(const Vector& a, const Vector& b, const Matrix& cost,
                           const SolverConfig& cfg) {
  cfg.Validate();
  ValidateMass(a, "a");
  ValidateMass(b, "b");
  const Eigen::Index n = a.size();
  const Eigen::Index m = b.size();
  ValidateCostMatrix(cost, n, m);
  const double total = a.sum();
  Require(std::abs(total - b.sum()) <= 1e-6 * std::max(1.0, total), ErrorKind::kInfeasibleInput,
          "total masses differ");

  const double eps = cfg.epsilon;
  const RowMatrix cost_rows = cost;
  const RowMatrix cost_cols = cost.transpose();
  const Vector log_a = LogMass(a);
  const Vector log_b = LogMass(b);
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) if (log_a[i] == kNegInf) f[i] = kNegInf;
  for (Eigen::Index j = 0; j < m; ++j) if (log_b[j] == kNegInf) g[j] = kNegInf;

  std::vector<double> buffer(std::max(n, m));
  Vector row_lse(n);
  const bool newton = NewtonEligible(a, b);
  int sweeps = 0;
  while (true) {
    // Row log-sums give both the current row marginals and the f update.
    double violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* c = cost_rows.row(i).data();
      for (Eigen::Index j = 0; j < m; ++j) buffer[j] = (g[j] - c[j]) / eps;
      row_lse[i] = LogSumExp(buffer.data(), m);
      const double marginal = f[i] == kNegInf ? 0.0 : std::exp(f[i] / eps + row_lse[i]);
      violation += std::abs(marginal - a[i]);
    }
    if (sweeps > 0 && violation <= cfg.tol) break;
    if (sweeps >= cfg.max_iters) break;
    if (newton && NewtonDue(sweeps)) {
      NewtonStep(f, g, a, b, cost_rows, eps, kBalancedKappa);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double* c = cost_rows.row(i).data();
        for (Eigen::Index j = 0; j < m; ++j) buffer[j] = (g[j] - c[j]) / eps;
        row_lse[i] = LogSumExp(buffer.data(), m);
      }
    }
    ++sweeps;
    for (Eigen::Index i = 0; i < n; ++i) {
      f[i] = log_a[i] == kNegInf ? kNegInf : eps * (log_a[i] - row_lse[i]);
    }
    CheckPotential(f, log_a, sweeps, "f");
    for (Eigen::Index j = 0; j < m; ++j) {
      if (log_b[j] == kNegInf) continue;
      const double* c = cost_cols.row(j).data();
      for (Eigen::Index i = 0; i < n; ++i) buffer[i] = (f[i] - c[i]) / eps;
      g[j] = eps * (log_b[j] - LogSumExp(buffer.data(), n));
    }
    CheckPotential(g, log_b, sweeps, "g");
  }

  TransportPlan plan = AssemblePlan(f, g, cost_rows, cost, eps, sweeps);
  const double row_violation = (plan.row_marginal - a).lpNorm<1>();
  const double col_violation = (plan.col_marginal - b).lpNorm<1>();
  plan.converged = std::max(row_violation, col_violation) <= cfg.tol;
  return plan;
}

TransportPlan UnbalancedSinkhornPlan(const Vector& a, const Vector& b, const Matrix& cost,
                                     const SolverConfig& cfg) {
  cfg.Validate();
  if (cfg.balanced()) return SinkhornPlan(a, b, cost, cfg);
  ValidateMass(a, "a");
  ValidateMass(b, "b");
  const Eigen::Index n = a.size();
  const Eigen::Index m = b.size();
  ValidateCostMatrix(cost, n, m);

  const double eps = cfg.epsilon;
  const double damping = eps * cfg.kappa / (eps + cfg.kappa);
  const RowMatrix cost_rows = cost;
  const RowMatrix cost_cols = cost.transpose();
  const Vector log_a = LogMass(a);
  const Vector log_b = LogMass(b);
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  for (Eigen::Index i = 0; i < n; ++i) if (log_a[i] == kNegInf) f[i] = kNegInf;
  for (Eigen::Index j = 0; j < m; ++j) if (log_b[j] == kNegInf) g[j] = kNegInf;

  std::vector<double> buffer(std::max(n, m));
  int sweeps = 0;
  bool converged = false;
  const bool newton = NewtonEligible(a, b);
  while (sweeps < cfg.max_iters) {
    if (newton && NewtonDue(sweeps)) NewtonStep(f, g, a, b, cost_rows, eps, cfg.kappa);
    ++sweeps;
    double change = 0.0;
    // f <- [f/eps + log a - log a'] * eps*kappa/(eps+kappa), a' = pi 1.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (log_a[i] == kNegInf) continue;
      const double* c = cost_rows.row(i).data();
      for (Eigen::Index j = 0; j < m; ++j) buffer[j] = (f[i] + g[j] - c[j]) / eps;
      const double log_row_mass = LogSumExp(buffer.data(), m);
      const double updated = (f[i] / eps + log_a[i] - log_row_mass) * damping;
      change = std::max(change, std::abs(updated - f[i]));
      f[i] = updated;
    }
    CheckPotential(f, log_a, sweeps, "f");
    // g <- [g/eps + log b - log b'] * eps*kappa/(eps+kappa), b' = pi^T 1.
    for (Eigen::Index j = 0; j < m; ++j) {
      if (log_b[j] == kNegInf) continue;
      const double* c = cost_cols.row(j).data();
      for (Eigen::Index i = 0; i < n; ++i) buffer[i] = (f[i] + g[j] - c[i]) / eps;
      const double log_col_mass = LogSumExp(buffer.data(), n);
      const double updated = (g[j] / eps + log_b[j] - log_col_mass) * damping;
      change = std::max(change, std::abs(updated - g[j]));
      g[j] = updated;
    }
    CheckPotential(g, log_b, sweeps, "g");
    if (std::isnan(change)) {
      Fail(ErrorKind::kNumericalFailure, "NaN potential change at iteration " +
                                             std::to_string(sweeps));
    }
    if (change <= cfg.tol) {
      converged = true;
      break;
    }
  }

  TransportPlan plan = AssemblePlan(f, g, cost_rows, cost, eps, sweeps);
  plan.converged = converged;
  return plan;
}

}  // namespace escfr
