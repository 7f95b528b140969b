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

// Experiment harness: split-train-evaluate runs, hyperparameter sweeps over
// a Cartesian grid, and solver timing benchmarks.

#ifndef ESCFR_EXPERIMENT_H_
#define ESCFR_EXPERIMENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "escfr/data.h"
#include "escfr/eval.h"
#include "escfr/training.h"

namespace escfr {

GenSpec GenSpecFromJson(const nlohmann::json& json);
nlohmann::json ToJson(const GenSpec& spec);
nlohmann::json ToJson(const MetricReport& report);

struct RunOutcome {
  FitResult fit;
  MetricReport in_sample;   // train split
  MetricReport out_sample;  // test split
};

// Stratified split with `split_seed`, Fit on train/valid, evaluate the
// selected model on train and test.
RunOutcome TrainAndEvaluate(const CausalDataset& data, const TrainConfig& cfg,
                            std::uint64_t split_seed);

// --- Sweep ------------------------------------------------------------------

struct SweepGrid {
  std::vector<double> lambda;
  std::vector<double> epsilon;
  std::vector<double> kappa;
  std::vector<double> gamma;
  std::vector<int> batch_size;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
};

// Keys: lambda, epsilon, kappa ("inf" allowed), gamma, batch_size, seeds and
// an optional "base" config object. Omitted axes take the base value.
SweepGrid SweepGridFromJson(const nlohmann::json& json);

struct SweepRun {
  int cell = 0;
  TrainConfig config;
  bool ok = false;
  std::string error;
  std::optional<double> sqrt_pehe_in;
  std::optional<double> sqrt_pehe_out;
  double auuc_in = 0.0;
  double auuc_out = 0.0;
  int best_epoch = 0;
};

struct SweepCellSummary {
  int cell = 0;
  TrainConfig config;
  int runs_ok = 0;
  int runs_failed = 0;
  std::optional<double> sqrt_pehe_out_mean;
  std::optional<double> sqrt_pehe_out_std;
  std::optional<double> sqrt_pehe_in_mean;
  std::optional<double> sqrt_pehe_in_std;
  std::optional<double> auuc_out_mean;
  std::optional<double> auuc_out_std;
};

struct SweepResult {
  std::vector<SweepRun> runs;  // cell-major, seeds in grid order
  std::vector<SweepCellSummary> cells;
};

// Runs every (cell, seed) pair on up to `jobs` worker threads. Failures are
// recorded per run. Output order never depends on completion order.
SweepResult RunSweep(const CausalDataset& data, const SweepGrid& grid, int jobs);

std::string SweepRunsCsv(const SweepResult& result);
std::string SweepSummaryCsv(const SweepResult& result);

// --- Benchmark --------------------------------------------------------------

struct BenchOptions {
  std::vector<int> sizes = {32, 64, 128, 256, 512, 1024};
  std::vector<double> epsilons = {0.1, 0.5, 1.0, 5.0, 10.0, 100.0};
  std::vector<double> kappas = {0.1, 0.5, 1.0, 5.0, 10.0, 100.0};
  int repetitions = 100;
  int dim = 2;
  int fixed_n = 128;
  double fixed_epsilon = 1.0;
  double fixed_kappa = 1.0;
  int max_iters = 1000;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string parameter;  // "n", "epsilon" or "kappa"
  double value = 0.0;
  std::string algorithm;  // "sinkhorn" or "unbalanced"
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  double mean_iterations = 0.0;
};

std::vector<BenchRow> RunBench(const BenchOptions& options);
std::string BenchCsv(const std::vector<BenchRow>& rows);
std::vector<BenchRow> ParseBenchCsv(const std::string& text);

struct TrendCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

// Time nondecreasing in n (both solvers), balanced time decreasing in
// epsilon, unbalanced time increasing in kappa; consecutive cells may
// violate the direction by at most `band` relative.
std::vector<TrendCheck> CheckBenchTrends(const std::vector<BenchRow>& rows, double band = 0.10);

// Shortest round-trip decimal.
std::string FormatNumber(double value);

}  // namespace escfr

#endif  // ESCFR_EXPERIMENT_H_
