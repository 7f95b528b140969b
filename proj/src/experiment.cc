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

#include "escfr/experiment.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "escfr/geometry.h"
#include "escfr/ot.h"
#include "escfr/status.h"

namespace escfr {
namespace {

using nlohmann::json;

template <typename T>
T Field(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    Fail(ErrorKind::kConfig, "field '" + key + "' has the wrong type");
  }
}

double ParseKappa(const json& value) {
  if (value.is_string()) {
    const std::string text = value.get<std::string>();
    if (text == "inf" || text == "infinity" || text == "balanced") return kBalancedKappa;
    Fail(ErrorKind::kConfig, "field 'kappa' must hold numbers or \"inf\"");
  }
  return Field<double>(value, "kappa");
}

std::string KappaText(double kappa) {
  return kappa == kBalancedKappa ? "inf" : FormatNumber(kappa);
}

std::string OptionalText(const std::optional<double>& value) {
  return value ? FormatNumber(*value) : "";
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation; zero for a single value.
MeanStd Summarize(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

MetricReport EvaluateModel(const TarnetParams& params, const CausalDataset& data,
                           const std::string& split) {
  const ForwardResult out = PredictOutcomes(params, data.X);
  Vector factual(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    factual[i] = data.t[i] == 1 ? out.yhat1[i] : out.yhat0[i];
  }
  return EvaluateEstimates(out.yhat1 - out.yhat0, factual, data, split);
}

std::string CsvEscape(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  if (text.find_first_of(",\"") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string FormatNumber(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

GenSpec GenSpecFromJson(const json& value) {
  Require(value.is_object(), ErrorKind::kConfig, "spec must be a JSON object");
  GenSpec spec;
  for (const auto& [key, item] : value.items()) {
    if (key == "N") spec.N = Field<int>(item, key);
    else if (key == "d") spec.d = Field<int>(item, key);
    else if (key == "bias_strength") spec.bias_strength = Field<double>(item, key);
    else if (key == "hidden_strength") spec.hidden_strength = Field<double>(item, key);
    else if (key == "noise_std") spec.noise_std = Field<double>(item, key);
    else if (key == "seed") spec.seed = Field<std::uint64_t>(item, key);
    else Fail(ErrorKind::kConfig, "unknown field '" + key + "'");
  }
  spec.Validate();
  return spec;
}

json ToJson(const GenSpec& spec) {
  return json{{"N", spec.N},
              {"d", spec.d},
              {"bias_strength", spec.bias_strength},
              {"hidden_strength", spec.hidden_strength},
              {"noise_std", spec.noise_std},
              {"seed", spec.seed}};
}

json ToJson(const MetricReport& report) {
  return json{{"split", report.split},
              {"pehe", report.pehe ? json(*report.pehe) : json(nullptr)},
              {"sqrt_pehe", report.sqrt_pehe ? json(*report.sqrt_pehe) : json(nullptr)},
              {"auuc", report.auuc},
              {"factual_rmse", report.factual_rmse}};
}

RunOutcome TrainAndEvaluate(const CausalDataset& data, const TrainConfig& cfg,
                            std::uint64_t split_seed) {
  const DatasetSplits splits = SplitDataset(data, kDefaultSplitRatios, split_seed);
  RunOutcome outcome;
  outcome.fit = Fit(splits.train, splits.valid, cfg);
  outcome.in_sample = EvaluateModel(outcome.fit.best_params, splits.train, "in-sample");
  outcome.out_sample = EvaluateModel(outcome.fit.best_params, splits.test, "out-sample");
  return outcome;
}

// --- Sweep ------------------------------------------------------------------

SweepGrid SweepGridFromJson(const json& value) {
  Require(value.is_object(), ErrorKind::kConfig, "grid must be a JSON object");
  SweepGrid grid;
  if (value.contains("base")) grid.base = TrainConfigFromJson(value.at("base"));
  auto list = [](const json& item, const std::string& key) {
    Require(item.is_array() && !item.empty(), ErrorKind::kConfig,
            "field '" + key + "' must be a non-empty array");
    return item;
  };
  for (const auto& [key, item] : value.items()) {
    if (key == "base") continue;
    const json values = list(item, key);
    for (const json& v : values) {
      if (key == "lambda") grid.lambda.push_back(Field<double>(v, key));
      else if (key == "epsilon") grid.epsilon.push_back(Field<double>(v, key));
      else if (key == "kappa") grid.kappa.push_back(ParseKappa(v));
      else if (key == "gamma") grid.gamma.push_back(Field<double>(v, key));
      else if (key == "batch_size") grid.batch_size.push_back(Field<int>(v, key));
      else if (key == "seeds") grid.seeds.push_back(Field<std::uint64_t>(v, key));
      else Fail(ErrorKind::kConfig, "unknown field '" + key + "'");
    }
  }
  if (grid.lambda.empty()) grid.lambda = {grid.base.lambda};
  if (grid.epsilon.empty()) grid.epsilon = {grid.base.epsilon};
  if (grid.kappa.empty()) grid.kappa = {grid.base.kappa};
  if (grid.gamma.empty()) grid.gamma = {grid.base.gamma};
  if (grid.batch_size.empty()) grid.batch_size = {grid.base.batch_size};
  if (grid.seeds.empty()) grid.seeds = {grid.base.seed};
  return grid;
}

SweepResult RunSweep(const CausalDataset& data, const SweepGrid& grid, int jobs) {
  std::vector<TrainConfig> cells;
  for (double lambda : grid.lambda)
    for (double epsilon : grid.epsilon)
      for (double kappa : grid.kappa)
        for (double gamma : grid.gamma)
          for (int batch_size : grid.batch_size) {
            TrainConfig cfg = grid.base;
            cfg.lambda = lambda;
            cfg.epsilon = epsilon;
            cfg.kappa = kappa;
            cfg.gamma = gamma;
            cfg.batch_size = batch_size;
            cells.push_back(cfg);
          }

  SweepResult result;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::uint64_t seed : grid.seeds) {
      SweepRun run;
      run.cell = static_cast<int>(c);
      run.config = cells[c];
      run.config.seed = seed;
      result.runs.push_back(run);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < result.runs.size(); k = next++) {
      SweepRun& run = result.runs[k];
      try {
        const RunOutcome outcome = TrainAndEvaluate(data, run.config, run.config.seed);
        run.sqrt_pehe_in = outcome.in_sample.sqrt_pehe;
        run.sqrt_pehe_out = outcome.out_sample.sqrt_pehe;
        run.auuc_in = outcome.in_sample.auuc;
        run.auuc_out = outcome.out_sample.auuc;
        run.best_epoch = outcome.fit.report.best_epoch;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(result.runs.size())));
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (std::thread& thread : threads) thread.join();

  for (std::size_t c = 0; c < cells.size(); ++c) {
    SweepCellSummary summary;
    summary.cell = static_cast<int>(c);
    summary.config = cells[c];
    std::vector<double> pehe_out, pehe_in, auuc_out;
    for (const SweepRun& run : result.runs) {
      if (run.cell != static_cast<int>(c)) continue;
      if (!run.ok) {
        ++summary.runs_failed;
        continue;
      }
      ++summary.runs_ok;
      if (run.sqrt_pehe_out) pehe_out.push_back(*run.sqrt_pehe_out);
      if (run.sqrt_pehe_in) pehe_in.push_back(*run.sqrt_pehe_in);
      auuc_out.push_back(run.auuc_out);
    }
    if (!pehe_out.empty()) {
      const MeanStd s = Summarize(pehe_out);
      summary.sqrt_pehe_out_mean = s.mean;
      summary.sqrt_pehe_out_std = s.std;
    }
    if (!pehe_in.empty()) {
      const MeanStd s = Summarize(pehe_in);
      summary.sqrt_pehe_in_mean = s.mean;
      summary.sqrt_pehe_in_std = s.std;
    }
    if (!auuc_out.empty()) {
      const MeanStd s = Summarize(auuc_out);
      summary.auuc_out_mean = s.mean;
      summary.auuc_out_std = s.std;
    }
    result.cells.push_back(summary);
  }
  return result;
}

std::string SweepRunsCsv(const SweepResult& result) {
  std::string out =
      "cell,estimator,lambda,epsilon,kappa,gamma,batch_size,seed,status,sqrt_pehe_in,"
      "sqrt_pehe_out,auuc_in,auuc_out,best_epoch,error\n";
  for (const SweepRun& run : result.runs) {
    const TrainConfig& c = run.config;
    out += std::to_string(run.cell) + "," + c.EstimatorTag() + "," + FormatNumber(c.lambda) +
           "," + FormatNumber(c.epsilon) + "," + KappaText(c.kappa) + "," +
           FormatNumber(c.gamma) + "," + std::to_string(c.batch_size) + "," +
           std::to_string(c.seed) + "," + (run.ok ? "ok" : "failed") + "," +
           OptionalText(run.sqrt_pehe_in) + "," + OptionalText(run.sqrt_pehe_out) + "," +
           (run.ok ? FormatNumber(run.auuc_in) : "") + "," +
           (run.ok ? FormatNumber(run.auuc_out) : "") + "," +
           (run.ok ? std::to_string(run.best_epoch) : "") + "," + CsvEscape(run.error) + "\n";
  }
  return out;
}

std::string SweepSummaryCsv(const SweepResult& result) {
  std::string out =
      "cell,estimator,lambda,epsilon,kappa,gamma,batch_size,runs_ok,runs_failed,"
      "sqrt_pehe_out_mean,sqrt_pehe_out_std,sqrt_pehe_in_mean,sqrt_pehe_in_std,"
      "auuc_out_mean,auuc_out_std\n";
  for (const SweepCellSummary& s : result.cells) {
    const TrainConfig& c = s.config;
    out += std::to_string(s.cell) + "," + c.EstimatorTag() + "," + FormatNumber(c.lambda) + "," +
           FormatNumber(c.epsilon) + "," + KappaText(c.kappa) + "," + FormatNumber(c.gamma) +
           "," + std::to_string(c.batch_size) + "," + std::to_string(s.runs_ok) + "," +
           std::to_string(s.runs_failed) + "," + OptionalText(s.sqrt_pehe_out_mean) + "," +
           OptionalText(s.sqrt_pehe_out_std) + "," + OptionalText(s.sqrt_pehe_in_mean) + "," +
           OptionalText(s.sqrt_pehe_in_std) + "," + OptionalText(s.auuc_out_mean) + "," +
           OptionalText(s.auuc_out_std) + "\n";
  }
  return out;
}

// --- Benchmark --------------------------------------------------------------

std::vector<BenchRow> RunBench(const BenchOptions& options) {
  for (int n : options.sizes) Require(n >= 2, ErrorKind::kConfig, "bench sizes must be >= 2");
  Require(options.repetitions >= 1, ErrorKind::kConfig, "repetitions must be >= 1");
  Require(options.dim >= 1, ErrorKind::kConfig, "dim must be >= 1");

  struct Cell {
    std::string parameter;
    double value;
    int n;
    double epsilon;
    double kappa;
    bool run_balanced;
  };
  std::vector<Cell> cells;
  for (int n : options.sizes) {
    cells.push_back({"n", static_cast<double>(n), n, options.fixed_epsilon, options.fixed_kappa,
                     true});
  }
  for (double eps : options.epsilons) {
    cells.push_back({"epsilon", eps, options.fixed_n, eps, options.fixed_kappa, true});
  }
  for (double kappa : options.kappas) {
    cells.push_back({"kappa", kappa, options.fixed_n, options.fixed_epsilon, kappa, false});
  }

  std::vector<BenchRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    std::vector<double> times[2];
    double iterations[2] = {0.0, 0.0};
    for (int rep = 0; rep < options.repetitions; ++rep) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(c),
                        static_cast<std::uint32_t>(rep)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      Matrix source(cell.n, options.dim);
      Matrix target(cell.n, options.dim);
      for (Eigen::Index k = 0; k < source.size(); ++k) source.data()[k] = uniform(rng);
      for (Eigen::Index k = 0; k < target.size(); ++k) target.data()[k] = uniform(rng);
      const Matrix cost = PairwiseSqEuclidean(source, target);
      const Vector mass = UniformMass(cell.n);
      SolverConfig cfg;
      cfg.epsilon = cell.epsilon;
      cfg.max_iters = options.max_iters;
      cfg.tol = options.tol;
      for (int algo = 0; algo < 2; ++algo) {
        if (algo == 0 && !cell.run_balanced) continue;
        cfg.kappa = algo == 0 ? kBalancedKappa : cell.kappa;
        const auto start = std::chrono::steady_clock::now();
        const TransportPlan plan = algo == 0 ? SinkhornPlan(mass, mass, cost, cfg)
                                             : UnbalancedSinkhornPlan(mass, mass, cost, cfg);
        times[algo].push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        iterations[algo] += plan.iterations_used;
      }
    }
    for (int algo = 0; algo < 2; ++algo) {
      if (times[algo].empty()) continue;
      const MeanStd s = Summarize(times[algo]);
      rows.push_back({cell.parameter, cell.value, algo == 0 ? "sinkhorn" : "unbalanced", s.mean,
                      s.std, iterations[algo] / options.repetitions});
    }
  }
  return rows;
}

std::string BenchCsv(const std::vector<BenchRow>& rows) {
  std::string out = "parameter,value,algorithm,mean_seconds,std_seconds,mean_iterations\n";
  for (const BenchRow& row : rows) {
    out += row.parameter + "," + FormatNumber(row.value) + "," + row.algorithm + "," +
           FormatNumber(row.mean_seconds) + "," + FormatNumber(row.std_seconds) + "," +
           FormatNumber(row.mean_iterations) + "\n";
  }
  return out;
}

std::vector<BenchRow> ParseBenchCsv(const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  std::getline(stream, line);
  std::vector<BenchRow> rows;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    Require(cells.size() == 6, ErrorKind::kParse, "bench row needs 6 fields: " + line);
    BenchRow row;
    row.parameter = cells[0];
    row.algorithm = cells[2];
    try {
      row.value = std::stod(cells[1]);
      row.mean_seconds = std::stod(cells[3]);
      row.std_seconds = std::stod(cells[4]);
      row.mean_iterations = std::stod(cells[5]);
    } catch (const std::exception&) {
      Fail(ErrorKind::kParse, "bad number in bench row: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<TrendCheck> CheckBenchTrends(const std::vector<BenchRow>& rows, double band) {
  auto series = [&rows](const std::string& parameter, const std::string& algorithm) {
    std::vector<std::pair<double, double>> points;
    for (const BenchRow& row : rows) {
      if (row.parameter == parameter && row.algorithm == algorithm) {
        points.emplace_back(row.value, row.mean_seconds);
      }
    }
    std::sort(points.begin(), points.end());
    return points;
  };
  auto check = [&](const std::string& name, const std::string& parameter,
                   const std::string& algorithm, bool increasing) {
    TrendCheck out;
    out.name = name;
    const auto points = series(parameter, algorithm);
    out.ok = points.size() >= 2;
    if (!out.ok) out.detail = "fewer than two cells";
    for (std::size_t k = 1; k < points.size(); ++k) {
      const double prev = points[k - 1].second;
      const double curr = points[k].second;
      const bool fine = increasing ? curr >= (1.0 - band) * prev : curr <= (1.0 + band) * prev;
      if (!fine) {
        out.ok = false;
        out.detail += parameter + "=" + FormatNumber(points[k - 1].first) + "->" +
                      FormatNumber(points[k].first) + ": " + FormatNumber(prev) + "s -> " +
                      FormatNumber(curr) + "s; ";
      }
    }
    return out;
  };
  return {check("sinkhorn time nondecreasing in n", "n", "sinkhorn", true),
          check("unbalanced time nondecreasing in n", "n", "unbalanced", true),
          check("sinkhorn time decreasing in epsilon", "epsilon", "sinkhorn", false),
          check("unbalanced time increasing in kappa", "kappa", "unbalanced", true)};
}

}  // namespace escfr
