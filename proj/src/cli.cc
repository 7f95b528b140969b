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

#include "escfr/cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "escfr/baselines.h"
#include "escfr/checkpoint.h"
#include "escfr/data.h"
#include "escfr/eval.h"
#include "escfr/experiment.h"
#include "escfr/geometry.h"
#include "escfr/nn.h"
#include "escfr/ot.h"
#include "escfr/status.h"
#include "escfr/training.h"

namespace escfr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json ParseJsonText(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, what + ": " + e.what());
  }
}

json LoadJsonFile(const std::string& path) { return ParseJsonText(ReadFile(path), path); }

void EnsureDirectory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Require(!ec, ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message());
}

std::string JoinPath(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string OptionalCell(const std::optional<double>& value) {
  return value ? FormatNumber(*value) : "";
}

const char* kMetricsHeader = "config_hash,seed,estimator,split,n,pehe,sqrt_pehe,auuc,factual_rmse\n";

std::string MetricsRow(const std::string& config_hash, std::uint64_t seed,
                       const std::string& estimator, const MetricReport& report,
                       Eigen::Index n) {
  return config_hash + "," + std::to_string(seed) + "," + estimator + "," + report.split + "," +
         std::to_string(n) + "," + OptionalCell(report.pehe) + "," +
         OptionalCell(report.sqrt_pehe) + "," + FormatNumber(report.auuc) + "," +
         FormatNumber(report.factual_rmse) + "\n";
}

void AppendMetricsRow(const std::string& path, const std::string& row) {
  std::string contents;
  if (fs::exists(path)) contents = ReadFile(path);
  if (contents.empty()) contents = kMetricsHeader;
  WriteFile(path, contents + row);
}

const CausalDataset& PickSplit(const DatasetSplits& splits, const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "valid") return splits.valid;
  return splits.test;
}

// Point files: one point per line, comma separated; a non-numeric first line
// is treated as a header.
Matrix LoadPoints(const std::string& path) {
  std::istringstream stream(ReadFile(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        numeric = numeric && used == cell.size();
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      Require(rows.empty() && line_no == 1, ErrorKind::kParse,
              path + ": line " + std::to_string(line_no) + " is not numeric");
      continue;
    }
    Require(rows.empty() || row.size() == rows.front().size(), ErrorKind::kParse,
            path + ": line " + std::to_string(line_no) + " has a different width");
    rows.push_back(row);
  }
  Require(!rows.empty(), ErrorKind::kParse, path + ": no points");
  Matrix points(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) points(i, j) = rows[i][j];
  }
  return points;
}

std::string MatrixCsv(const Matrix& matrix) {
  std::string out;
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      if (j) out += ",";
      out += FormatNumber(matrix(i, j));
    }
    out += "\n";
  }
  return out;
}

std::vector<double> ToStd(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double ParseKappaFlag(const std::string& text) {
  if (text == "inf" || text == "infinity") return kBalancedKappa;
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  Fail(ErrorKind::kConfig, "--kappa must be a number or 'inf', got '" + text + "'");
}

// --- Subcommands ------------------------------------------------------------

struct GenerateArgs {
  std::string spec;
  std::string out;
};

int CmdGenerate(const GenerateArgs& args, std::ostream& out) {
  const GenSpec spec = GenSpecFromJson(LoadJsonFile(args.spec));
  const CausalDataset data = GenerateSynthetic(spec);
  SaveDatasetCsv(data, args.out);
  WriteFile(args.out + ".spec.json", ToJson(spec).dump(2) + "\n");
  out << "wrote " << data.size() << " rows to " << args.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
};

int CmdTrain(const TrainArgs& args, std::ostream& out) {
  const std::string data_bytes = ReadFile(args.data);
  const CausalDataset data = DatasetFromCsv(data_bytes);
  const TrainConfig cfg = TrainConfigFromJson(LoadJsonFile(args.config));
  const json resolved = ToJson(cfg);
  const std::string config_text = resolved.dump();
  const std::string config_hash = ContentHash(config_text);

  EnsureDirectory(args.out);
  const json manifest = {
      {"tool_version", kToolVersion},
      {"config", resolved},
      {"config_hash", config_hash},
      {"dataset", args.data},
      {"dataset_fingerprint", ContentHash(data_bytes)},
      {"seed", cfg.seed},
      {"artifacts",
       {{"report", "report.json"},
        {"checkpoint", "best.ckpt"},
        {"metrics", "metrics.csv"},
        {"timing", "timing.json"}}}};
  WriteFile(JoinPath(args.out, "manifest.json"), manifest.dump(2) + "\n");

  const DatasetSplits splits = SplitDataset(data, kDefaultSplitRatios, cfg.seed);
  FitResult fit = Fit(splits.train, splits.valid, cfg);
  fit.report.checkpoint = "best.ckpt";

  SaveCheckpoint(Checkpoint{fit.best_params, config_hash, cfg.seed},
                 JoinPath(args.out, "best.ckpt"));
  WriteFile(JoinPath(args.out, "report.json"), ToJson(fit.report).dump(2) + "\n");
  WriteFile(JoinPath(args.out, "timing.json"), TimingJson(fit.report).dump(2) + "\n");

  const ForwardResult pred = PredictOutcomes(fit.best_params, splits.valid.X);
  Vector factual(splits.valid.size());
  for (Eigen::Index i = 0; i < factual.size(); ++i) {
    factual[i] = splits.valid.t[i] == 1 ? pred.yhat1[i] : pred.yhat0[i];
  }
  const MetricReport valid_report =
      EvaluateEstimates(pred.yhat1 - pred.yhat0, factual, splits.valid, "valid");
  WriteFile(JoinPath(args.out, "metrics.csv"),
            std::string(kMetricsHeader) + MetricsRow(config_hash, cfg.seed, fit.report.estimator,
                                                     valid_report, splits.valid.size()));
  out << json{{"estimator", fit.report.estimator},
              {"best_epoch", fit.report.best_epoch},
              {"stopped_epoch", fit.report.stopped_epoch},
              {"validation", ToJson(valid_report)}}
             .dump()
      << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string estimator;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
  int k = 5;
  double ridge = kDefaultRidge;
  std::string results = "results.csv";
};

int CmdEval(const EvalArgs& args, std::ostream& out) {
  Require(args.checkpoint.empty() != args.estimator.empty(), ErrorKind::kConfig,
          "pass exactly one of --checkpoint or --estimator");
  const CausalDataset data = LoadDatasetCsv(args.data);

  Vector tau_hat;
  Vector factual;
  std::string estimator;
  std::string config_hash;
  std::uint64_t seed = args.seed.value_or(0);
  json extra = json::object();

  if (!args.checkpoint.empty()) {
    Require(fs::exists(args.checkpoint), ErrorKind::kInput,
            "checkpoint not found: " + args.checkpoint);
    const Checkpoint ckpt = LoadCheckpoint(args.checkpoint);
    Require(ckpt.params.input_dim() == data.dim(), ErrorKind::kShape,
            "checkpoint expects " + std::to_string(ckpt.params.input_dim()) +
                " covariates, data has " + std::to_string(data.dim()));
    seed = args.seed.value_or(ckpt.split_seed);
    const DatasetSplits splits = SplitDataset(data, kDefaultSplitRatios, seed);
    const CausalDataset& part = PickSplit(splits, args.split);
    const ForwardResult pred = PredictOutcomes(ckpt.params, part.X);
    tau_hat = pred.yhat1 - pred.yhat0;
    factual.resize(part.size());
    for (Eigen::Index i = 0; i < part.size(); ++i) {
      factual[i] = part.t[i] == 1 ? pred.yhat1[i] : pred.yhat0[i];
    }
    estimator = "checkpoint";
    config_hash = ckpt.config_hash;
    const MetricReport report = EvaluateEstimates(tau_hat, factual, part, args.split);
    json printed = ToJson(report);
    printed["estimator"] = estimator;
    out << printed.dump() << "\n";
    AppendMetricsRow(args.results, MetricsRow(config_hash, seed, estimator, report, part.size()));
    return kExitOk;
  }

  const DatasetSplits splits = SplitDataset(data, kDefaultSplitRatios, seed);
  const CausalDataset& part = PickSplit(splits, args.split);
  if (args.estimator == "ols") {
    const RidgeModel model = OlsSLearner(splits.train, args.ridge);
    tau_hat = model.PredictCate(part.X);
    const Vector y0 = model.Predict(part.X, 0);
    const Vector y1 = model.Predict(part.X, 1);
    factual.resize(part.size());
    for (Eigen::Index i = 0; i < part.size(); ++i) factual[i] = part.t[i] == 1 ? y1[i] : y0[i];
    extra["treatment_coefficient"] = model.treatment_coefficient();
    config_hash = ContentHash("ols:ridge=" + FormatNumber(args.ridge));
  } else if (args.estimator == "knn") {
    tau_hat = KnnCate(splits.train, args.k, part.X);
    const Vector y0 = KnnOutcome(splits.train, args.k, part.X, 0);
    const Vector y1 = KnnOutcome(splits.train, args.k, part.X, 1);
    factual.resize(part.size());
    for (Eigen::Index i = 0; i < part.size(); ++i) factual[i] = part.t[i] == 1 ? y1[i] : y0[i];
    config_hash = ContentHash("knn:k=" + std::to_string(args.k));
  } else {
    Fail(ErrorKind::kConfig, "unknown estimator '" + args.estimator + "' (ols|knn)");
  }
  estimator = args.estimator;
  const MetricReport report = EvaluateEstimates(tau_hat, factual, part, args.split);
  json printed = ToJson(report);
  printed["estimator"] = estimator;
  for (const auto& [key, value] : extra.items()) printed[key] = value;
  out << printed.dump() << "\n";
  AppendMetricsRow(args.results, MetricsRow(config_hash, seed, estimator, report, part.size()));
  return kExitOk;
}

struct SweepArgs {
  std::string data;
  std::string grid;
  std::string out;
  int jobs = 1;
};

int CmdSweep(const SweepArgs& args, std::ostream& out) {
  const CausalDataset data = LoadDatasetCsv(args.data);
  const SweepGrid grid = SweepGridFromJson(LoadJsonFile(args.grid));
  Require(args.jobs >= 1, ErrorKind::kConfig, "--jobs must be >= 1");
  int jobs = args.jobs;
  if (const char* cap = std::getenv("ESCFR_THREADS")) {
    try {
      const int limit = std::stoi(cap);
      if (limit >= 1) jobs = std::min(jobs, limit);
    } catch (const std::exception&) {
      Fail(ErrorKind::kConfig, std::string("ESCFR_THREADS is not an integer: ") + cap);
    }
  }
  EnsureDirectory(args.out);
  const SweepResult result = RunSweep(data, grid, jobs);
  WriteFile(JoinPath(args.out, "runs.csv"), SweepRunsCsv(result));
  WriteFile(JoinPath(args.out, "sweep.csv"), SweepSummaryCsv(result));
  const auto ok = std::count_if(result.runs.begin(), result.runs.end(),
                                [](const SweepRun& run) { return run.ok; });
  out << "runs " << result.runs.size() << ", succeeded " << ok << ", cells "
      << result.cells.size() << "\n";
  return ok > 0 ? kExitOk : kExitNumerical;
}

struct OtArgs {
  std::string a;
  std::string b;
  double epsilon = 0.5;
  std::string kappa = "inf";
  int max_iters = 1000;
  double tol = 1e-6;
  bool exact = false;
  std::string out;
};

int CmdOt(const OtArgs& args, std::ostream& out) {
  const Matrix a = LoadPoints(args.a);
  const Matrix b = LoadPoints(args.b);
  Require(a.cols() == b.cols(), ErrorKind::kShape, "point sets have different dimensions");
  const Matrix cost = PairwiseSqEuclidean(a, b);
  const Vector mass_a = UniformMass(a.rows());
  const Vector mass_b = UniformMass(b.rows());
  SolverConfig cfg;
  cfg.epsilon = args.epsilon;
  cfg.kappa = ParseKappaFlag(args.kappa);
  cfg.max_iters = args.max_iters;
  cfg.tol = args.tol;
  std::string algorithm;
  TransportPlan plan;
  if (args.exact) {
    algorithm = "exact";
    plan = ExactTransport(mass_a, mass_b, cost);
  } else {
    cfg.Validate();
    algorithm = cfg.balanced() ? "sinkhorn" : "unbalanced";
    plan = cfg.balanced() ? SinkhornPlan(mass_a, mass_b, cost, cfg)
                          : UnbalancedSinkhornPlan(mass_a, mass_b, cost, cfg);
  }
  if (!args.out.empty()) WriteFile(args.out, MatrixCsv(plan.coupling));
  const json summary = {
      {"algorithm", algorithm},
      {"cost", plan.cost},
      {"row_residual_l1", (plan.row_marginal - mass_a).lpNorm<1>()},
      {"col_residual_l1", (plan.col_marginal - mass_b).lpNorm<1>()},
      {"row_marginal", ToStd(plan.row_marginal)},
      {"col_marginal", ToStd(plan.col_marginal)},
      {"iterations", plan.iterations_used},
      {"converged", plan.converged}};
  out << summary.dump() << "\n";
  return kExitOk;
}

struct BenchArgs {
  BenchOptions options;
  std::string out = "bench.csv";
};

int CmdBench(const BenchArgs& args, std::ostream& out) {
  const std::vector<BenchRow> rows = RunBench(args.options);
  WriteFile(args.out, BenchCsv(rows));
  for (const TrendCheck& check : CheckBenchTrends(rows)) {
    out << (check.ok ? "PASS " : "FAIL ") << check.name;
    if (!check.detail.empty()) out << " (" << check.detail << ")";
    out << "\n";
  }
  return kExitOk;
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumericalFailure:
    case ErrorKind::kLinearAlgebra:
      return kExitNumerical;
    default:
      return kExitInput;
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entire-space counterfactual regression toolkit", "escfr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset CSV");
  generate->add_option("--spec", gen.spec, "Generator spec JSON")->required();
  generate->add_option("--out", gen.out, "Output CSV")->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Split, train and save the best checkpoint");
  train->add_option("--data", train_args.data, "Dataset CSV")->required();
  train->add_option("--config", train_args.config, "Training config JSON")->required();
  train->add_option("--out", train_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline on a split");
  eval->add_option("--data", eval_args.data, "Dataset CSV")->required();
  auto* ckpt_opt = eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint path");
  auto* est_opt = eval->add_option("--estimator", eval_args.estimator, "Baseline: ols or knn");
  ckpt_opt->excludes(est_opt);
  eval->add_option("--split", eval_args.split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  eval->add_option("--seed", eval_args.seed, "Split seed (checkpoint's seed by default)");
  eval->add_option("--k", eval_args.k, "Neighbours for knn");
  eval->add_option("--ridge", eval_args.ridge, "Ridge penalty for ols");
  eval->add_option("--results", eval_args.results, "CSV that receives one appended row");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run a hyperparameter grid");
  sweep->add_option("--data", sweep_args.data, "Dataset CSV")->required();
  sweep->add_option("--grid", sweep_args.grid, "Grid JSON")->required();
  sweep->add_option("--out", sweep_args.out, "Output directory")->required();
  sweep->add_option("--jobs", sweep_args.jobs, "Concurrent runs (capped by ESCFR_THREADS)");

  OtArgs ot_args;
  auto* ot = app.add_subcommand("ot", "Solve a transport problem between two point sets");
  ot->add_option("--a", ot_args.a, "Source points CSV")->required();
  ot->add_option("--b", ot_args.b, "Target points CSV")->required();
  ot->add_option("--epsilon", ot_args.epsilon, "Entropic regularization");
  ot->add_option("--kappa", ot_args.kappa, "Marginal relaxation, or inf for balanced");
  ot->add_option("--max-iters", ot_args.max_iters, "Iteration cap");
  ot->add_option("--tol", ot_args.tol, "Stopping tolerance");
  ot->add_flag("--exact", ot_args.exact, "Use the exact simplex solver");
  ot->add_option("--out", ot_args.out, "Coupling matrix CSV");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time both Sinkhorn solvers");
  bench->add_option("--sizes", bench_args.options.sizes, "Problem sizes")->delimiter(',');
  bench->add_option("--epsilons", bench_args.options.epsilons, "Epsilon values")->delimiter(',');
  bench->add_option("--kappas", bench_args.options.kappas, "Kappa values")->delimiter(',');
  bench->add_option("--reps", bench_args.options.repetitions, "Repetitions per cell");
  bench->add_option("--dim", bench_args.options.dim, "Point dimension");
  bench->add_option("--seed", bench_args.options.seed, "Instance seed");
  bench->add_option("--max-iters", bench_args.options.max_iters, "Iteration cap");
  bench->add_option("--tol", bench_args.options.tol, "Stopping tolerance");
  bench->add_option("--out", bench_args.out, "Output CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*generate) return CmdGenerate(gen, out);
    if (*train) return CmdTrain(train_args, out);
    if (*eval) return CmdEval(eval_args, out);
    if (*sweep) return CmdSweep(sweep_args, out);
    if (*ot) return CmdOt(ot_args, out);
    if (*bench) return CmdBench(bench_args, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

int RunCli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return RunCli(args, std::cout, std::cerr);
}

}  // namespace escfr
