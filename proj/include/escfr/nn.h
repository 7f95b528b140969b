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

// TARNet-style estimator: a shared representation network feeding two
// outcome heads, one per treatment arm, with exact reverse-mode gradients
// for the losses used in training.

#ifndef ESCFR_NN_H_
#define ESCFR_NN_H_

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "escfr/ot.h"

namespace escfr {

inline constexpr Eigen::Index kHiddenWidth = 60;

enum class Activation { kElu, kRelu };

const char* ActivationName(Activation activation);
Activation ParseActivation(const std::string& name);

// Affine map x -> x * weight + bias for row-vector inputs.
struct Layer {
  Matrix weight;  // fan_in x fan_out
  Vector bias;    // fan_out
};

enum class Block { kPsi, kHead0, kHead1 };

struct TarnetParams {
  // Representation: d -> w -> w, activation after each layer.
  std::vector<Layer> psi;
  // Heads: w -> w -> w -> 1, activation on the hidden layers only.
  std::vector<Layer> head0;
  std::vector<Layer> head1;
  Activation activation = Activation::kElu;
  // Outcomes are modelled in standardized units; PredictCate maps back.
  double outcome_mean = 0.0;
  double outcome_scale = 1.0;

  Eigen::Index input_dim() const { return psi.front().weight.rows(); }
  Eigen::Index repr_dim() const { return psi.back().weight.cols(); }

  const std::vector<Layer>& block(Block which) const;
  std::vector<Layer>& block(Block which);

  void Validate() const;
  Eigen::Index ParameterCount() const;
  // Order: psi, head0, head1; per layer the weight (column-major) then bias.
  Vector Flatten() const;
  void Unflatten(const Vector& flat);
  double& ParameterAt(Eigen::Index flat_index);
  TarnetParams ZerosLike() const;
};

// Fan-in scaled uniform weights U(-sqrt(3/fan_in), sqrt(3/fan_in)), zero
// biases, drawn in Flatten() order from a generator seeded with `seed`.
TarnetParams InitParams(Eigen::Index input_dim, std::uint64_t seed,
                        Activation activation = Activation::kElu,
                        Eigen::Index hidden_width = kHiddenWidth);

struct ForwardResult {
  Matrix repr;
  Vector yhat0;
  Vector yhat1;
};

// Rows of X are units. Both heads are evaluated for every unit.
ForwardResult TarnetForward(const TarnetParams& params, const Matrix& X);

// yhat1 - yhat0, rescaled by params.outcome_scale.
Vector PredictCate(const TarnetParams& params, const Matrix& X);

// Potential-outcome predictions in outcome units.
ForwardResult PredictOutcomes(const TarnetParams& params, const Matrix& X);

// --- Losses -----------------------------------------------------------------

struct ConstantLoss {
  double value = 0.0;
};

// ||W||_F^2 of one weight matrix.
struct WeightNormLoss {
  Block block = Block::kPsi;
  int layer = 0;
};

// Mean over rows of ||X W + b - targets||^2 using only the first
// representation layer before its activation. Quadratic in the parameters.
struct LinearProbeLoss {
  Matrix X;
  Matrix targets;
};

// Factual risk plus lambda times <D^gamma, plan>. D^gamma is built from the
// representations of treated (t=1) and untreated (t=0) rows and the
// cross-arm head predictions. The plan is solved on a gradient-stopped copy
// of D^gamma unless `frozen_plan` supplies one; either way it is a constant
// for differentiation.
struct EscfrLoss {
  Matrix X;
  std::vector<int> t;
  Vector y;  // standardized factual outcomes
  double lambda = 0.0;
  double gamma = 0.0;
  SolverConfig solver;
  std::optional<Matrix> frozen_plan;
  // Forces loss_D = 0 (degenerate batches).
  bool skip_discrepancy = false;
};

using LossSpec = std::variant<ConstantLoss, WeightNormLoss, LinearProbeLoss, EscfrLoss>;

struct GradientBundle {
  TarnetParams grad;
  double factual_loss = 0.0;
  double discrepancy_loss = 0.0;
  double total = 0.0;
  // Set when the discrepancy term was active.
  std::optional<TransportPlan> plan;
};

GradientBundle GradEval(const TarnetParams& params, const LossSpec& spec);

// Loss value only; same conventions as GradEval.
double LossValue(const TarnetParams& params, const LossSpec& spec);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  int samples = 0;
};

// Compares GradEval against central differences with step h on `samples`
// parameters chosen by a generator seeded with `seed`. For EscfrLoss the
// plan is solved once at `params` and frozen for every evaluation.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport GradCheck(const TarnetParams& params, const LossSpec& spec, int samples,
                          double h, std::uint64_t seed = 0);

}  // namespace escfr

#endif  // ESCFR_NN_H_
