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

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "escfr/geometry.h"
#include "escfr/status.h"

namespace escfr {
namespace {

Matrix Activate(const Matrix& z, Activation activation) {
  if (activation == Activation::kRelu) return z.cwiseMax(0.0);
  return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

Matrix ActivationDerivative(const Matrix& z, Activation activation) {
  if (activation == Activation::kRelu) {
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

struct Tape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
  Matrix output;
};

Tape ForwardBlock(const std::vector<Layer>& layers, const Matrix& input, Activation activation,
                  bool activate_last) {
  Tape tape;
  Matrix current = input;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Matrix z = current * layers[k].weight;
    z.rowwise() += layers[k].bias.transpose();
    tape.inputs.push_back(std::move(current));
    const bool activate = activate_last || k + 1 < layers.size();
    current = activate ? Activate(z, activation) : z;
    tape.pre_activations.push_back(std::move(z));
  }
  tape.output = std::move(current);
  return tape;
}

// Accumulates parameter gradients into `grads` and returns d loss / d input.
Matrix BackwardBlock(const std::vector<Layer>& layers, const Tape& tape, Matrix upstream,
                     Activation activation, bool activate_last, std::vector<Layer>& grads) {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const bool activate = activate_last || k + 1 < layers.size();
    if (activate) {
      upstream = upstream.cwiseProduct(ActivationDerivative(tape.pre_activations[k], activation));
    }
    grads[k].weight.noalias() += tape.inputs[k].transpose() * upstream;
    grads[k].bias += upstream.colwise().sum().transpose();
    upstream = (upstream * layers[k].weight.transpose()).eval();
  }
  return upstream;
}

void ValidateLayers(const std::vector<Layer>& layers, Eigen::Index input_dim,
                    const char* name) {
  Require(!layers.empty(), ErrorKind::kShape, std::string(name) + " has no layers");
  Eigen::Index expected = input_dim;
  for (const Layer& layer : layers) {
    Require(layer.weight.rows() == expected && layer.bias.size() == layer.weight.cols(),
            ErrorKind::kShape, std::string(name) + " layer dimensions do not compose");
    Require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::kInput,
            std::string(name) + " has non-finite parameters");
    expected = layer.weight.cols();
  }
}

void CheckInput(const TarnetParams& params, const Matrix& X) {
  Require(X.cols() == params.input_dim(), ErrorKind::kShape,
          "covariates have " + std::to_string(X.cols()) + " columns, model expects " +
              std::to_string(params.input_dim()));
  Require(X.allFinite(), ErrorKind::kInput, "covariates contain non-finite values");
}

struct EscfrEvaluation {
  double factual = 0.0;
  double discrepancy = 0.0;
  double total = 0.0;
  std::optional<TransportPlan> plan;
};

struct Partition {
  std::vector<Eigen::Index> treated;
  std::vector<Eigen::Index> untreated;
};

Partition PartitionRows(const EscfrLoss& spec) {
  Require(static_cast<Eigen::Index>(spec.t.size()) == spec.X.rows() &&
              spec.y.size() == spec.X.rows(),
          ErrorKind::kSpec, "escfr loss: X, t and y row counts differ");
  Require(spec.lambda >= 0.0 && spec.gamma >= 0.0, ErrorKind::kSpec,
          "escfr loss: lambda and gamma must be nonnegative");
  Partition part;
  for (std::size_t r = 0; r < spec.t.size(); ++r) {
    Require(spec.t[r] == 0 || spec.t[r] == 1, ErrorKind::kSpec,
            "escfr loss: treatment must be 0 or 1");
    (spec.t[r] == 1 ? part.treated : part.untreated).push_back(static_cast<Eigen::Index>(r));
  }
  return part;
}

bool DiscrepancyActive(const EscfrLoss& spec, const Partition& part) {
  return spec.lambda > 0.0 && !spec.skip_discrepancy && part.treated.size() >= 2 &&
         part.untreated.size() >= 2;
}

Matrix Gather(const Matrix& source, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(k) = source.row(rows[k]);
  return out;
}

Vector Gather(const Vector& source, const std::vector<Eigen::Index>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = source[rows[k]];
  return out;
}

struct CostParts {
  Matrix cost;  // D^gamma
  PairedOutcomes outcomes;
};

CostParts BuildCost(const Matrix& repr, const Vector& yhat0, const Vector& yhat1,
                    const EscfrLoss& spec, const Partition& part) {
  CostParts parts;
  parts.outcomes.y_treated = Gather(spec.y, part.treated);
  parts.outcomes.y_untreated = Gather(spec.y, part.untreated);
  parts.outcomes.yhat_cf_treated = Gather(yhat0, part.treated);
  parts.outcomes.yhat_cf_untreated = Gather(yhat1, part.untreated);
  const Matrix repr_cost = PairwiseSqEuclidean(Gather(repr, part.treated),
                                               Gather(repr, part.untreated));
  parts.cost = PforCostMatrix(repr_cost, parts.outcomes, spec.gamma);
  Require(parts.cost.allFinite(), ErrorKind::kNumericalFailure,
          "transport cost matrix has non-finite entries");
  return parts;
}

TransportPlan SolveOrFreeze(const Matrix& cost, const EscfrLoss& spec) {
  if (spec.frozen_plan) {
    Require(spec.frozen_plan->rows() == cost.rows() && spec.frozen_plan->cols() == cost.cols(),
            ErrorKind::kSpec, "frozen plan shape does not match the batch");
    TransportPlan plan;
    plan.coupling = *spec.frozen_plan;
    PlanSummary summary = PlanCostAndMarginals(plan.coupling, cost);
    plan.cost = summary.cost;
    plan.row_marginal = std::move(summary.row_marginal);
    plan.col_marginal = std::move(summary.col_marginal);
    plan.converged = true;
    return plan;
  }
  // The cost is copied by value into the solver: no gradient path exists
  // through the plan.
  const Matrix stopped = cost;
  return UnbalancedSinkhornPlan(UniformMass(cost.rows()), UniformMass(cost.cols()), stopped,
                                spec.solver);
}

double FactualLoss(const Vector& yhat0, const Vector& yhat1, const EscfrLoss& spec,
                   const Partition& part) {
  double treated = 0.0;
  for (Eigen::Index r : part.treated) treated += std::pow(yhat1[r] - spec.y[r], 2);
  double untreated = 0.0;
  for (Eigen::Index r : part.untreated) untreated += std::pow(yhat0[r] - spec.y[r], 2);
  if (!part.treated.empty()) treated /= static_cast<double>(part.treated.size());
  if (!part.untreated.empty()) untreated /= static_cast<double>(part.untreated.size());
  return treated + untreated;
}

void CheckFiniteLoss(double value) {
  if (!std::isfinite(value)) Fail(ErrorKind::kNumericalFailure, "non-finite loss");
}

GradientBundle EscfrGradient(const TarnetParams& params, const EscfrLoss& spec) {
  CheckInput(params, spec.X);
  const Partition part = PartitionRows(spec);
  const Tape psi = ForwardBlock(params.psi, spec.X, params.activation, true);
  const Tape head0 = ForwardBlock(params.head0, psi.output, params.activation, false);
  const Tape head1 = ForwardBlock(params.head1, psi.output, params.activation, false);
  const Vector yhat0 = head0.output.col(0);
  const Vector yhat1 = head1.output.col(0);
  const Eigen::Index rows = spec.X.rows();

  GradientBundle bundle;
  bundle.grad = params.ZerosLike();
  bundle.factual_loss = FactualLoss(yhat0, yhat1, spec, part);

  Matrix d_yhat0 = Matrix::Zero(rows, 1);
  Matrix d_yhat1 = Matrix::Zero(rows, 1);
  Matrix d_repr = Matrix::Zero(rows, psi.output.cols());
  const double n_treated = static_cast<double>(part.treated.size());
  const double n_untreated = static_cast<double>(part.untreated.size());
  for (Eigen::Index r : part.treated) d_yhat1(r, 0) += 2.0 * (yhat1[r] - spec.y[r]) / n_treated;
  for (Eigen::Index r : part.untreated) {
    d_yhat0(r, 0) += 2.0 * (yhat0[r] - spec.y[r]) / n_untreated;
  }

  if (DiscrepancyActive(spec, part)) {
    const CostParts parts = BuildCost(psi.output, yhat0, yhat1, spec, part);
    TransportPlan plan = SolveOrFreeze(parts.cost, spec);
    const Matrix& pi = plan.coupling;
    bundle.discrepancy_loss = pi.cwiseProduct(parts.cost).sum();
    const double scale = 2.0 * spec.lambda;
    const Vector row_mass = pi.rowwise().sum();
    const Vector col_mass = pi.colwise().sum().transpose();
    const Matrix repr_t = Gather(psi.output, part.treated);
    const Matrix repr_u = Gather(psi.output, part.untreated);
    const Matrix pulled_u = pi * repr_u;              // sum_j pi_ij r_j
    const Matrix pulled_t = pi.transpose() * repr_t;  // sum_i pi_ij r_i
    const Vector pulled_y_u = pi * parts.outcomes.y_untreated;
    const Vector pulled_y_t = pi.transpose() * parts.outcomes.y_treated;
    for (std::size_t k = 0; k < part.treated.size(); ++k) {
      const Eigen::Index r = part.treated[k];
      d_repr.row(r) += scale * (row_mass[k] * repr_t.row(k) - pulled_u.row(k));
      if (spec.gamma > 0.0) {
        d_yhat0(r, 0) += scale * spec.gamma * (row_mass[k] * yhat0[r] - pulled_y_u[k]);
      }
    }
    for (std::size_t k = 0; k < part.untreated.size(); ++k) {
      const Eigen::Index r = part.untreated[k];
      d_repr.row(r) += scale * (col_mass[k] * repr_u.row(k) - pulled_t.row(k));
      if (spec.gamma > 0.0) {
        d_yhat1(r, 0) += scale * spec.gamma * (col_mass[k] * yhat1[r] - pulled_y_t[k]);
      }
    }
    bundle.plan = std::move(plan);
  }
  bundle.total = bundle.factual_loss + spec.lambda * bundle.discrepancy_loss;
  CheckFiniteLoss(bundle.total);

  d_repr += BackwardBlock(params.head0, head0, d_yhat0, params.activation, false,
                          bundle.grad.head0);
  d_repr += BackwardBlock(params.head1, head1, d_yhat1, params.activation, false,
                          bundle.grad.head1);
  BackwardBlock(params.psi, psi, d_repr, params.activation, true, bundle.grad.psi);
  return bundle;
}

double EscfrValue(const TarnetParams& params, const EscfrLoss& spec) {
  CheckInput(params, spec.X);
  const Partition part = PartitionRows(spec);
  const ForwardResult out = TarnetForward(params, spec.X);
  double total = FactualLoss(out.yhat0, out.yhat1, spec, part);
  if (DiscrepancyActive(spec, part)) {
    const CostParts parts = BuildCost(out.repr, out.yhat0, out.yhat1, spec, part);
    const TransportPlan plan = SolveOrFreeze(parts.cost, spec);
    total += spec.lambda * plan.coupling.cwiseProduct(parts.cost).sum();
  }
  return total;
}

const Layer& CheckedLayer(const TarnetParams& params, const WeightNormLoss& spec) {
  const auto& layers = params.block(spec.block);
  Require(spec.layer >= 0 && spec.layer < static_cast<int>(layers.size()), ErrorKind::kSpec,
          "weight-norm loss references layer " + std::to_string(spec.layer));
  return layers[spec.layer];
}

void CheckProbe(const TarnetParams& params, const LinearProbeLoss& spec) {
  Require(spec.X.cols() == params.input_dim() && spec.X.rows() > 0, ErrorKind::kSpec,
          "linear probe covariates do not match the model");
  Require(spec.targets.rows() == spec.X.rows() &&
              spec.targets.cols() == params.psi.front().weight.cols(),
          ErrorKind::kSpec, "linear probe targets have the wrong shape");
}

Matrix ProbeResidual(const TarnetParams& params, const LinearProbeLoss& spec) {
  Matrix z = spec.X * params.psi.front().weight;
  z.rowwise() += params.psi.front().bias.transpose();
  return z - spec.targets;
}

void CheckFiniteGradient(const TarnetParams& grad) {
  if (!grad.Flatten().allFinite()) Fail(ErrorKind::kNumericalFailure, "non-finite gradient");
}

}  // namespace

const char* ActivationName(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "elu";
}

Activation ParseActivation(const std::string& name) {
  if (name == "elu") return Activation::kElu;
  if (name == "relu") return Activation::kRelu;
  Fail(ErrorKind::kConfig, "unknown activation '" + name + "'");
}

const std::vector<Layer>& TarnetParams::block(Block which) const {
  switch (which) {
    case Block::kPsi: return psi;
    case Block::kHead0: return head0;
    case Block::kHead1: return head1;
  }
  return psi;
}

std::vector<Layer>& TarnetParams::block(Block which) {
  return const_cast<std::vector<Layer>&>(std::as_const(*this).block(which));
}

void TarnetParams::Validate() const {
  Require(!psi.empty(), ErrorKind::kShape, "representation has no layers");
  ValidateLayers(psi, psi.front().weight.rows(), "psi");
  ValidateLayers(head0, repr_dim(), "head0");
  ValidateLayers(head1, repr_dim(), "head1");
  Require(head0.back().weight.cols() == 1 && head1.back().weight.cols() == 1, ErrorKind::kShape,
          "outcome heads must end in a scalar");
  Require(std::isfinite(outcome_mean) && outcome_scale > 0.0 && std::isfinite(outcome_scale),
          ErrorKind::kInput, "invalid outcome standardization");
}

Eigen::Index TarnetParams::ParameterCount() const {
  Eigen::Index count = 0;
  for (Block b : {Block::kPsi, Block::kHead0, Block::kHead1}) {
    for (const Layer& layer : block(b)) count += layer.weight.size() + layer.bias.size();
  }
  return count;
}

Vector TarnetParams::Flatten() const {
  Vector flat(ParameterCount());
  Eigen::Index offset = 0;
  for (Block b : {Block::kPsi, Block::kHead0, Block::kHead1}) {
    for (const Layer& layer : block(b)) {
      flat.segment(offset, layer.weight.size()) = layer.weight.reshaped();
      offset += layer.weight.size();
      flat.segment(offset, layer.bias.size()) = layer.bias;
      offset += layer.bias.size();
    }
  }
  return flat;
}

void TarnetParams::Unflatten(const Vector& flat) {
  Require(flat.size() == ParameterCount(), ErrorKind::kShape,
          "flat parameter vector has the wrong length");
  Eigen::Index offset = 0;
  for (Block b : {Block::kPsi, Block::kHead0, Block::kHead1}) {
    for (Layer& layer : block(b)) {
      layer.weight.reshaped() = flat.segment(offset, layer.weight.size());
      offset += layer.weight.size();
      layer.bias = flat.segment(offset, layer.bias.size());
      offset += layer.bias.size();
    }
  }
}

double& TarnetParams::ParameterAt(Eigen::Index flat_index) {
  Eigen::Index offset = flat_index;
  for (Block b : {Block::kPsi, Block::kHead0, Block::kHead1}) {
    for (Layer& layer : block(b)) {
      if (offset < layer.weight.size()) return layer.weight.data()[offset];
      offset -= layer.weight.size();
      if (offset < layer.bias.size()) return layer.bias[offset];
      offset -= layer.bias.size();
    }
  }
  Fail(ErrorKind::kShape, "parameter index out of range");
}

TarnetParams TarnetParams::ZerosLike() const {
  TarnetParams out = *this;
  for (Block b : {Block::kPsi, Block::kHead0, Block::kHead1}) {
    for (Layer& layer : out.block(b)) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
  }
  return out;
}

TarnetParams InitParams(Eigen::Index input_dim, std::uint64_t seed, Activation activation,
                        Eigen::Index hidden_width) {
  Require(input_dim >= 1, ErrorKind::kConfig, "input_dim must be >= 1");
  Require(hidden_width >= 1, ErrorKind::kConfig, "hidden width must be >= 1");
  std::mt19937_64 rng(seed);
  auto make_layer = [&rng](Eigen::Index fan_in, Eigen::Index fan_out) {
    const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = dist(rng);
    layer.bias = Vector::Zero(fan_out);
    return layer;
  };
  TarnetParams params;
  params.activation = activation;
  params.psi.push_back(make_layer(input_dim, hidden_width));
  params.psi.push_back(make_layer(hidden_width, hidden_width));
  for (auto* head : {&params.head0, &params.head1}) {
    head->push_back(make_layer(hidden_width, hidden_width));
    head->push_back(make_layer(hidden_width, hidden_width));
    head->push_back(make_layer(hidden_width, 1));
  }
  return params;
}

ForwardResult TarnetForward(const TarnetParams& params, const Matrix& X) {
  CheckInput(params, X);
  ForwardResult out;
  out.repr = ForwardBlock(params.psi, X, params.activation, true).output;
  out.yhat0 = ForwardBlock(params.head0, out.repr, params.activation, false).output.col(0);
  out.yhat1 = ForwardBlock(params.head1, out.repr, params.activation, false).output.col(0);
  return out;
}

Vector PredictCate(const TarnetParams& params, const Matrix& X) {
  const ForwardResult out = TarnetForward(params, X);
  return (out.yhat1 - out.yhat0) * params.outcome_scale;
}

ForwardResult PredictOutcomes(const TarnetParams& params, const Matrix& X) {
  ForwardResult out = TarnetForward(params, X);
  out.yhat0 = (out.yhat0.array() * params.outcome_scale + params.outcome_mean).matrix();
  out.yhat1 = (out.yhat1.array() * params.outcome_scale + params.outcome_mean).matrix();
  return out;
}

GradientBundle GradEval(const TarnetParams& params, const LossSpec& spec) {
  GradientBundle bundle = std::visit(
      [&params](const auto& loss) -> GradientBundle {
        using T = std::decay_t<decltype(loss)>;
        GradientBundle out;
        if constexpr (std::is_same_v<T, ConstantLoss>) {
          out.grad = params.ZerosLike();
          out.factual_loss = loss.value;
          out.total = loss.value;
        } else if constexpr (std::is_same_v<T, WeightNormLoss>) {
          const Layer& layer = CheckedLayer(params, loss);
          out.grad = params.ZerosLike();
          out.grad.block(loss.block)[loss.layer].weight = 2.0 * layer.weight;
          out.total = out.factual_loss = layer.weight.squaredNorm();
        } else if constexpr (std::is_same_v<T, LinearProbeLoss>) {
          CheckProbe(params, loss);
          const Matrix residual = ProbeResidual(params, loss);
          const double rows = static_cast<double>(loss.X.rows());
          out.grad = params.ZerosLike();
          out.grad.psi.front().weight = (2.0 / rows) * loss.X.transpose() * residual;
          out.grad.psi.front().bias = (2.0 / rows) * residual.colwise().sum().transpose();
          out.total = out.factual_loss = residual.squaredNorm() / rows;
        } else {
          out = EscfrGradient(params, loss);
        }
        return out;
      },
      spec);
  CheckFiniteGradient(bundle.grad);
  return bundle;
}

double LossValue(const TarnetParams& params, const LossSpec& spec) {
  return std::visit(
      [&params](const auto& loss) -> double {
        using T = std::decay_t<decltype(loss)>;
        if constexpr (std::is_same_v<T, ConstantLoss>) {
          return loss.value;
        } else if constexpr (std::is_same_v<T, WeightNormLoss>) {
          return CheckedLayer(params, loss).weight.squaredNorm();
        } else if constexpr (std::is_same_v<T, LinearProbeLoss>) {
          CheckProbe(params, loss);
          return ProbeResidual(params, loss).squaredNorm() / static_cast<double>(loss.X.rows());
        } else {
          return EscfrValue(params, loss);
        }
      },
      spec);
}

GradCheckReport GradCheck(const TarnetParams& params, const LossSpec& spec, int samples,
                          double h, std::uint64_t seed) {
  Require(h > 0.0, ErrorKind::kConfig, "finite-difference step must be positive");
  Require(samples >= 1, ErrorKind::kConfig, "gradcheck needs at least one sample");
  LossSpec frozen = spec;
  GradientBundle analytic = GradEval(params, frozen);
  if (auto* escfr = std::get_if<EscfrLoss>(&frozen); escfr && analytic.plan) {
    escfr->frozen_plan = analytic.plan->coupling;
  }
  const Vector gradient = analytic.grad.Flatten();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, gradient.size() - 1);
  TarnetParams probe = params;
  GradCheckReport report;
  double sum = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Eigen::Index index = pick(rng);
    double& slot = probe.ParameterAt(index);
    const double original = slot;
    slot = original + h;
    const double plus = LossValue(probe, frozen);
    slot = original - h;
    const double minus = LossValue(probe, frozen);
    slot = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double exact = gradient[index];
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
    const double rel = std::abs(exact - numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    sum += rel;
  }
  report.samples = samples;
  report.mean_rel_error = sum / samples;
  return report;
}

}  // namespace escfr
