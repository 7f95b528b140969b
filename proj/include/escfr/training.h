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

// Training for the entire-space counterfactual regression objective:
// factual risk plus lambda times the relaxed, outcome-calibrated transport
// discrepancy between treated and untreated representations, optimized with
// Adam over stratified mini-batches and early-stopped on a validation metric.

#ifndef ESCFR_TRAINING_H_
#define ESCFR_TRAINING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "escfr/data.h"
#include "escfr/nn.h"
#include "escfr/ot.h"

namespace escfr {

enum class SelectionMetric { kAuuc, kFactualLoss };

struct TrainConfig {
  double lambda = 1.0;
  double epsilon = 0.5;
  double kappa = 5.0;  // kBalancedKappa selects balanced Sinkhorn
  double gamma = 1.0;
  int batch_size = 32;
  int max_epochs = 400;
  int patience = 30;
  int validate_every = 2;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  SelectionMetric selection_metric = SelectionMetric::kAuuc;
  Activation activation = Activation::kElu;
  int hidden_width = static_cast<int>(kHiddenWidth);
  int solver_max_iters = 1000;
  double solver_tol = 1e-6;
  bool standardize_outcomes = true;

  void Validate() const;
  SolverConfig solver() const;
  // "tarnet", "cfr-wass", "cfr-rmpr", "cfr-pfor" or "escfr".
  std::string EstimatorTag() const;
};

nlohmann::json ToJson(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys and bad values throw a
// config error naming the key.
TrainConfig TrainConfigFromJson(const nlohmann::json& json);

// --- Mini-batches -----------------------------------------------------------

struct Batch {
  std::vector<Eigen::Index> indices;  // treated units first, then untreated
  Eigen::Index treated = 0;
  // Fewer than two units in one group: the transport term is skipped.
  bool ot_skip = false;
};

inline constexpr Eigen::Index kMinGroupForTransport = 2;

// Stratified shuffle: ceil(N / batch_size) batches whose sizes and treated
// counts partition N and the treated count as evenly as integer arithmetic
// allows. Deterministic in (seed, epoch).
std::vector<Batch> MakeBatches(const std::vector<int>& t, int batch_size, std::uint64_t seed,
                               int epoch);

// --- Objective and optimizer -------------------------------------------------

EscfrLoss BatchLoss(const Matrix& X, const std::vector<int>& t, const Vector& y,
                    const Batch& batch, const TrainConfig& cfg);

struct ObjectiveResult {
  double factual_loss = 0.0;
  double discrepancy_loss = 0.0;
  double total = 0.0;
  std::optional<TransportPlan> plan;
};

// `y` must already be in the units the model is trained on.
ObjectiveResult EscfrObjective(const TarnetParams& params, const Matrix& X,
                               const std::vector<int>& t, const Vector& y, const Batch& batch,
                               const TrainConfig& cfg);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step = 0;

  static AdamState For(const TarnetParams& params);
};

// One Adam step in place; weight_decay * theta is added to the gradient.
void AdamUpdate(Vector& theta, const Vector& gradient, AdamState& state,
                const TrainConfig& cfg);

struct StepResult {
  TarnetParams params;
  AdamState state;
  ObjectiveResult losses;
};

StepResult TrainStep(const TarnetParams& params, const AdamState& state, const Matrix& X,
                     const std::vector<int>& t, const Vector& y, const Batch& batch,
                     const TrainConfig& cfg);

// --- Early stopping and the training loop -----------------------------------

class EarlyStopping {
 public:
  EarlyStopping(int patience, bool higher_is_better);

  // Returns true when `metric` strictly improves on the best so far.
  bool Update(int epoch, double metric);
  bool ShouldStop() const { return misses_ >= patience_; }
  std::optional<int> best_epoch() const { return best_epoch_; }
  std::optional<double> best_metric() const { return best_metric_; }

 private:
  int patience_;
  bool higher_is_better_;
  int misses_ = 0;
  std::optional<int> best_epoch_;
  std::optional<double> best_metric_;
};

struct EpochRecord {
  int epoch = 0;
  double factual_loss = 0.0;
  double discrepancy_loss = 0.0;
  std::optional<double> validation_metric;
};

struct TrainReport {
  std::string estimator;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::optional<double> best_metric;
  int stopped_epoch = 0;
  bool early_stopped = false;
  bool discrepancy_active = false;
  std::string checkpoint;
  // Wall-clock seconds per epoch. Not part of ToJson, which must be
  // reproducible byte for byte.
  std::vector<double> epoch_seconds;
};

nlohmann::json ToJson(const TrainReport& report);
nlohmann::json TimingJson(const TrainReport& report);

struct FitOptions {
  // Replaces the configured validation metric; receives the current
  // parameters and the 1-based epoch.
  std::function<double(const TarnetParams&, int)> validation_metric;
};

struct FitResult {
  TrainReport report;
  TarnetParams best_params;
};

FitResult Fit(const CausalDataset& train, const CausalDataset& valid, const TrainConfig& cfg,
              const FitOptions& options = {});

}  // namespace escfr

#endif  // ESCFR_TRAINING_H_
