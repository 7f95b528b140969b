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

#include "escfr/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <utility>

#include "escfr/eval.h"
#include "escfr/status.h"

namespace escfr {
namespace {

using nlohmann::json;

const char* MetricName(SelectionMetric metric) {
  return metric == SelectionMetric::kAuuc ? "auuc" : "factual_loss";
}

json KappaToJson(double kappa) {
  if (kappa == kBalancedKappa) return "inf";
  return kappa;
}

template <typename T>
T Get(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    Fail(ErrorKind::kConfig, "field '" + key + "' has the wrong type");
  }
}

double KappaFromJson(const json& value) {
  if (value.is_string()) {
    const std::string text = value.get<std::string>();
    if (text == "inf" || text == "infinity" || text == "balanced") return kBalancedKappa;
    Fail(ErrorKind::kConfig, "field 'kappa' must be a number or \"inf\"");
  }
  if (value.is_null()) return kBalancedKappa;
  return Get<double>(value, "kappa");
}

Vector Standardize(const Vector& y, double mean, double scale) {
  return ((y.array() - mean) / scale).matrix();
}

double ValidationFactualLoss(const TarnetParams& params, const CausalDataset& valid,
                             const Vector& y_model) {
  const ForwardResult out = TarnetForward(params, valid.X);
  double treated = 0.0, untreated = 0.0, n_t = 0.0, n_u = 0.0;
  for (Eigen::Index i = 0; i < valid.size(); ++i) {
    if (valid.t[i] == 1) {
      treated += std::pow(out.yhat1[i] - y_model[i], 2);
      n_t += 1.0;
    } else {
      untreated += std::pow(out.yhat0[i] - y_model[i], 2);
      n_u += 1.0;
    }
  }
  return treated / n_t + untreated / n_u;
}

}  // namespace

void TrainConfig::Validate() const {
  Require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::kConfig,
          "lambda must be nonnegative");
  Require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::kConfig, "gamma must be nonnegative");
  Require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::kConfig,
          "epsilon must be positive");
  Require(kappa > 0.0 && !std::isnan(kappa), ErrorKind::kConfig,
          "kappa must be positive or \"inf\"");
  Require(batch_size >= 2, ErrorKind::kConfig, "batch_size must be >= 2");
  Require(max_epochs >= 1, ErrorKind::kConfig, "max_epochs must be >= 1");
  Require(patience >= 1, ErrorKind::kConfig, "patience must be >= 1");
  Require(validate_every >= 1, ErrorKind::kConfig, "validate_every must be >= 1");
  Require(learning_rate >= 0.0, ErrorKind::kConfig, "learning_rate must be nonnegative");
  Require(weight_decay >= 0.0, ErrorKind::kConfig, "weight_decay must be nonnegative");
  Require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, ErrorKind::kConfig,
          "adam_beta1 must lie in [0, 1)");
  Require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, ErrorKind::kConfig,
          "adam_beta2 must lie in [0, 1)");
  Require(adam_eps > 0.0, ErrorKind::kConfig, "adam_eps must be positive");
  Require(hidden_width >= 1, ErrorKind::kConfig, "hidden_width must be >= 1");
  solver().Validate();
}

SolverConfig TrainConfig::solver() const {
  SolverConfig cfg;
  cfg.epsilon = epsilon;
  cfg.kappa = kappa;
  cfg.max_iters = solver_max_iters;
  cfg.tol = solver_tol;
  return cfg;
}

std::string TrainConfig::EstimatorTag() const {
  if (lambda == 0.0) return "tarnet";
  const bool relaxed = kappa != kBalancedKappa;
  const bool calibrated = gamma > 0.0;
  if (relaxed && calibrated) return "escfr";
  if (relaxed) return "cfr-rmpr";
  if (calibrated) return "cfr-pfor";
  return "cfr-wass";
}

json ToJson(const TrainConfig& cfg) {
  return json{
      {"lambda", cfg.lambda},
      {"epsilon", cfg.epsilon},
      {"kappa", KappaToJson(cfg.kappa)},
      {"gamma", cfg.gamma},
      {"batch_size", cfg.batch_size},
      {"max_epochs", cfg.max_epochs},
      {"patience", cfg.patience},
      {"validate_every", cfg.validate_every},
      {"learning_rate", cfg.learning_rate},
      {"weight_decay", cfg.weight_decay},
      {"adam_beta1", cfg.adam_beta1},
      {"adam_beta2", cfg.adam_beta2},
      {"adam_eps", cfg.adam_eps},
      {"seed", cfg.seed},
      {"selection_metric", MetricName(cfg.selection_metric)},
      {"activation", ActivationName(cfg.activation)},
      {"hidden_width", cfg.hidden_width},
      {"solver_max_iters", cfg.solver_max_iters},
      {"solver_tol", cfg.solver_tol},
      {"standardize_outcomes", cfg.standardize_outcomes},
  };
}

TrainConfig TrainConfigFromJson(const json& value) {
  Require(value.is_object(), ErrorKind::kConfig, "config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, item] : value.items()) {
    if (key == "lambda") cfg.lambda = Get<double>(item, key);
    else if (key == "epsilon") cfg.epsilon = Get<double>(item, key);
    else if (key == "kappa") cfg.kappa = KappaFromJson(item);
    else if (key == "gamma") cfg.gamma = Get<double>(item, key);
    else if (key == "batch_size") cfg.batch_size = Get<int>(item, key);
    else if (key == "max_epochs") cfg.max_epochs = Get<int>(item, key);
    else if (key == "patience") cfg.patience = Get<int>(item, key);
    else if (key == "validate_every") cfg.validate_every = Get<int>(item, key);
    else if (key == "learning_rate") cfg.learning_rate = Get<double>(item, key);
    else if (key == "weight_decay") cfg.weight_decay = Get<double>(item, key);
    else if (key == "adam_beta1") cfg.adam_beta1 = Get<double>(item, key);
    else if (key == "adam_beta2") cfg.adam_beta2 = Get<double>(item, key);
    else if (key == "adam_eps") cfg.adam_eps = Get<double>(item, key);
    else if (key == "seed") cfg.seed = Get<std::uint64_t>(item, key);
    else if (key == "selection_metric") {
      const std::string name = Get<std::string>(item, key);
      if (name == "auuc") cfg.selection_metric = SelectionMetric::kAuuc;
      else if (name == "factual_loss") cfg.selection_metric = SelectionMetric::kFactualLoss;
      else Fail(ErrorKind::kConfig, "field 'selection_metric' must be auuc or factual_loss");
    } else if (key == "activation") cfg.activation = ParseActivation(Get<std::string>(item, key));
    else if (key == "hidden_width") cfg.hidden_width = Get<int>(item, key);
    else if (key == "solver_max_iters") cfg.solver_max_iters = Get<int>(item, key);
    else if (key == "solver_tol") cfg.solver_tol = Get<double>(item, key);
    else if (key == "standardize_outcomes") cfg.standardize_outcomes = Get<bool>(item, key);
    else Fail(ErrorKind::kConfig, "unknown field '" + key + "'");
  }
  cfg.Validate();
  return cfg;
}

std::vector<Batch> MakeBatches(const std::vector<int>& t, int batch_size, std::uint64_t seed,
                               int epoch) {
  Require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be positive");
  std::vector<Eigen::Index> groups[2];
  for (std::size_t i = 0; i < t.size(); ++i) {
    Require(t[i] == 0 || t[i] == 1, ErrorKind::kValidation, "treatment must be 0 or 1");
    groups[t[i]].push_back(static_cast<Eigen::Index>(i));
  }
  Require(!groups[0].empty() && !groups[1].empty(), ErrorKind::kStratification,
          "mini-batches need both treated and untreated units");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(groups[1].begin(), groups[1].end(), rng);
  std::shuffle(groups[0].begin(), groups[0].end(), rng);

  const long total = static_cast<long>(t.size());
  const long treated = static_cast<long>(groups[1].size());
  const long untreated = total - treated;
  const long count = (total + batch_size - 1) / batch_size;
  std::vector<Batch> batches(count);
  long treated_begin = 0;
  long untreated_begin = 0;
  for (long k = 0; k < count; ++k) {
    const long size_end = (k + 1) * total / count;
    const long treated_end = (k + 1) * treated / count;
    const long untreated_end =
        std::clamp(size_end - treated_end, untreated_begin, untreated);
    Batch& batch = batches[k];
    batch.indices.assign(groups[1].begin() + treated_begin, groups[1].begin() + treated_end);
    batch.indices.insert(batch.indices.end(), groups[0].begin() + untreated_begin,
                         groups[0].begin() + untreated_end);
    batch.treated = treated_end - treated_begin;
    const long batch_untreated = untreated_end - untreated_begin;
    batch.ot_skip = batch.treated < kMinGroupForTransport ||
                    batch_untreated < kMinGroupForTransport;
    treated_begin = treated_end;
    untreated_begin = untreated_end;
  }
  return batches;
}

EscfrLoss BatchLoss(const Matrix& X, const std::vector<int>& t, const Vector& y,
                    const Batch& batch, const TrainConfig& cfg) {
  EscfrLoss loss;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch.indices.size());
  loss.X.resize(rows, X.cols());
  loss.y.resize(rows);
  loss.t.resize(batch.indices.size());
  for (Eigen::Index k = 0; k < rows; ++k) {
    const Eigen::Index r = batch.indices[k];
    Require(r >= 0 && r < X.rows(), ErrorKind::kShape, "batch index out of range");
    loss.X.row(k) = X.row(r);
    loss.y[k] = y[r];
    loss.t[k] = t[r];
  }
  loss.lambda = cfg.lambda;
  loss.gamma = cfg.gamma;
  loss.solver = cfg.solver();
  loss.skip_discrepancy = batch.ot_skip;
  return loss;
}

ObjectiveResult EscfrObjective(const TarnetParams& params, const Matrix& X,
                               const std::vector<int>& t, const Vector& y, const Batch& batch,
                               const TrainConfig& cfg) {
  GradientBundle bundle = GradEval(params, BatchLoss(X, t, y, batch, cfg));
  ObjectiveResult out;
  out.factual_loss = bundle.factual_loss;
  out.discrepancy_loss = bundle.discrepancy_loss;
  out.total = bundle.total;
  out.plan = std::move(bundle.plan);
  return out;
}

AdamState AdamState::For(const TarnetParams& params) {
  AdamState state;
  state.first_moment = Vector::Zero(params.ParameterCount());
  state.second_moment = Vector::Zero(params.ParameterCount());
  return state;
}

void AdamUpdate(Vector& theta, const Vector& gradient, AdamState& state,
                const TrainConfig& cfg) {
  Require(theta.size() == gradient.size() && state.first_moment.size() == theta.size() &&
              state.second_moment.size() == theta.size(),
          ErrorKind::kShape, "optimizer state does not match the parameters");
  const Vector g = gradient + cfg.weight_decay * theta;
  state.step += 1;
  state.first_moment = cfg.adam_beta1 * state.first_moment + (1.0 - cfg.adam_beta1) * g;
  state.second_moment =
      cfg.adam_beta2 * state.second_moment + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.adam_beta1, step);
  const double correction2 = 1.0 - std::pow(cfg.adam_beta2, step);
  theta.array() -= cfg.learning_rate * (state.first_moment.array() / correction1) /
                   ((state.second_moment.array() / correction2).sqrt() + cfg.adam_eps);
}

StepResult TrainStep(const TarnetParams& params, const AdamState& state, const Matrix& X,
                     const std::vector<int>& t, const Vector& y, const Batch& batch,
                     const TrainConfig& cfg) {
  GradientBundle bundle = GradEval(params, BatchLoss(X, t, y, batch, cfg));
  StepResult out{params, state, {}};
  Vector theta = params.Flatten();
  AdamUpdate(theta, bundle.grad.Flatten(), out.state, cfg);
  if (!theta.allFinite()) Fail(ErrorKind::kNumericalFailure, "parameters became non-finite");
  out.params.Unflatten(theta);
  out.losses.factual_loss = bundle.factual_loss;
  out.losses.discrepancy_loss = bundle.discrepancy_loss;
  out.losses.total = bundle.total;
  out.losses.plan = std::move(bundle.plan);
  return out;
}

EarlyStopping::EarlyStopping(int patience, bool higher_is_better)
    : patience_(patience), higher_is_better_(higher_is_better) {
  Require(patience >= 1, ErrorKind::kConfig, "patience must be >= 1");
}

bool EarlyStopping::Update(int epoch, double metric) {
  const bool improved = !best_metric_ || (higher_is_better_ ? metric > *best_metric_
                                                            : metric < *best_metric_);
  if (improved) {
    best_metric_ = metric;
    best_epoch_ = epoch;
    misses_ = 0;
  } else {
    ++misses_;
  }
  return improved;
}

json ToJson(const TrainReport& report) {
  json epochs = json::array();
  for (const EpochRecord& record : report.epochs) {
    epochs.push_back({{"epoch", record.epoch},
                      {"factual_loss", record.factual_loss},
                      {"discrepancy_loss", record.discrepancy_loss},
                      {"validation_metric", record.validation_metric
                                                ? json(*record.validation_metric)
                                                : json(nullptr)}});
  }
  return json{{"estimator", report.estimator},
              {"config", ToJson(report.config)},
              {"selection_metric", MetricName(report.config.selection_metric)},
              {"epochs", std::move(epochs)},
              {"best_epoch", report.best_epoch},
              {"best_metric", report.best_metric ? json(*report.best_metric) : json(nullptr)},
              {"stopped_epoch", report.stopped_epoch},
              {"early_stopped", report.early_stopped},
              {"discrepancy_active", report.discrepancy_active},
              {"checkpoint", report.checkpoint}};
}

json TimingJson(const TrainReport& report) {
  double total = 0.0;
  for (double s : report.epoch_seconds) total += s;
  return json{{"epoch_seconds", report.epoch_seconds}, {"total_seconds", total}};
}

FitResult Fit(const CausalDataset& train, const CausalDataset& valid, const TrainConfig& cfg,
              const FitOptions& options) {
  cfg.Validate();
  train.Validate();
  valid.Validate();
  Require(train.dim() == valid.dim(), ErrorKind::kShape,
          "train and validation covariate dimensions differ");

  double mean = 0.0;
  double scale = 1.0;
  if (cfg.standardize_outcomes) {
    mean = train.y.mean();
    const double variance = (train.y.array() - mean).square().mean();
    scale = variance > 0.0 ? std::sqrt(variance) : 1.0;
  }
  const Vector y_train = Standardize(train.y, mean, scale);
  const Vector y_valid = Standardize(valid.y, mean, scale);

  TarnetParams params = InitParams(train.dim(), cfg.seed, cfg.activation, cfg.hidden_width);
  params.outcome_mean = mean;
  params.outcome_scale = scale;
  AdamState state = AdamState::For(params);
  const bool higher_is_better =
      options.validation_metric || cfg.selection_metric == SelectionMetric::kAuuc;
  EarlyStopping stopper(cfg.patience, higher_is_better);

  FitResult result;
  TrainReport& report = result.report;
  report.estimator = cfg.EstimatorTag();
  report.config = cfg;
  std::optional<TarnetParams> best;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::vector<Batch> batches = MakeBatches(train.t, cfg.batch_size, cfg.seed, epoch);
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        StepResult step = TrainStep(params, state, train.X, train.t, y_train, batches[b], cfg);
        params = std::move(step.params);
        state = std::move(step.state);
        record.factual_loss += step.losses.factual_loss;
        record.discrepancy_loss += step.losses.discrepancy_loss;
        report.discrepancy_active = report.discrepancy_active || step.losses.plan.has_value();
      } catch (const Error& e) {
        throw Error(e.kind(), "epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(b) + ": " + e.what());
      }
    }
    record.factual_loss /= static_cast<double>(batches.size());
    record.discrepancy_loss /= static_cast<double>(batches.size());
    report.stopped_epoch = epoch;

    bool stop = false;
    if (epoch % cfg.validate_every == 0) {
      double metric = 0.0;
      if (options.validation_metric) {
        metric = options.validation_metric(params, epoch);
      } else if (cfg.selection_metric == SelectionMetric::kAuuc) {
        metric = Auuc(PredictCate(params, valid.X), valid.t, valid.y);
      } else {
        metric = ValidationFactualLoss(params, valid, y_valid);
      }
      record.validation_metric = metric;
      if (stopper.Update(epoch, metric)) best = params;
      stop = stopper.ShouldStop();
    }
    report.epochs.push_back(record);
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (stop) {
      report.early_stopped = true;
      break;
    }
  }

  if (best) {
    result.best_params = std::move(*best);
    report.best_epoch = *stopper.best_epoch();
    report.best_metric = stopper.best_metric();
  } else {
    result.best_params = std::move(params);
    report.best_epoch = report.stopped_epoch;
  }
  return result;
}

}  // namespace escfr
