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

#include "escfr/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "escfr/status.h"

namespace escfr {
namespace {

constexpr int kMaxResamples = 10;

void AppendNumber(std::string& out, double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  out.append(buffer, result.ptr);
}

std::string Trim(std::string_view text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(begin, end - begin + 1));
}

std::vector<std::string> SplitCells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(Trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double ParseCell(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* end = cell.data() + cell.size();
  const auto result = std::from_chars(cell.data(), end, value);
  if (cell.empty() || result.ec != std::errc() || result.ptr != end) {
    Fail(ErrorKind::kParse, "row " + std::to_string(row) + ", column '" + column +
                                "': not a number: '" + cell + "'");
  }
  return value;
}

}  // namespace

Eigen::Index CausalDataset::treated_count() const {
  return std::count(t.begin(), t.end(), 1);
}

void CausalDataset::Validate() const {
  const Eigen::Index n = X.rows();
  Require(static_cast<Eigen::Index>(t.size()) == n && y.size() == n, ErrorKind::kValidation,
          "X, t and y have different lengths");
  Require(X.cols() >= 1, ErrorKind::kValidation, "dataset has no covariates");
  for (int value : t) {
    Require(value == 0 || value == 1, ErrorKind::kValidation, "treatment must be 0 or 1");
  }
  Require(mu0.has_value() == mu1.has_value(), ErrorKind::kValidation,
          "mu0 and mu1 must be given together");
  if (mu0) {
    Require(mu0->size() == n && mu1->size() == n, ErrorKind::kValidation,
            "potential outcomes have the wrong length");
    Require(tau.has_value() && tau->size() == n, ErrorKind::kValidation, "tau missing");
    Require(((*mu1 - *mu0) - *tau).cwiseAbs().maxCoeff() == 0.0, ErrorKind::kValidation,
            "tau must equal mu1 - mu0");
  }
  const Eigen::Index treated = treated_count();
  Require(treated > 0 && treated < n, ErrorKind::kValidation,
          "both treatment groups must be non-empty");
}

CausalDataset CausalDataset::Subset(const std::vector<Eigen::Index>& rows) const {
  CausalDataset out;
  const Eigen::Index count = static_cast<Eigen::Index>(rows.size());
  out.X.resize(count, X.cols());
  out.y.resize(count);
  out.t.resize(rows.size());
  if (mu0) {
    out.mu0 = Vector(count);
    out.mu1 = Vector(count);
    out.tau = Vector(count);
  }
  for (Eigen::Index k = 0; k < count; ++k) {
    const Eigen::Index r = rows[k];
    out.X.row(k) = X.row(r);
    out.y[k] = y[r];
    out.t[k] = t[r];
    if (mu0) {
      (*out.mu0)[k] = (*mu0)[r];
      (*out.mu1)[k] = (*mu1)[r];
      (*out.tau)[k] = (*tau)[r];
    }
  }
  return out;
}

void GenSpec::Validate() const {
  Require(N >= 4, ErrorKind::kConfig, "N must be >= 4");
  Require(d >= 1, ErrorKind::kConfig, "d must be >= 1");
  Require(bias_strength >= 0.0 && std::isfinite(bias_strength), ErrorKind::kConfig,
          "bias_strength must be a nonnegative number");
  Require(hidden_strength >= 0.0 && std::isfinite(hidden_strength), ErrorKind::kConfig,
          "hidden_strength must be a nonnegative number");
  Require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorKind::kConfig,
          "noise_std must be a nonnegative number");
}

Vector SelectionDirection(std::uint64_t seed, int d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector theta(d);
  do {
    for (int k = 0; k < d; ++k) theta[k] = normal(rng);
  } while (theta.norm() == 0.0);
  return theta / theta.norm();
}

CausalDataset GenerateSynthetic(const GenSpec& spec) {
  spec.Validate();
  const Vector theta = SelectionDirection(spec.seed, spec.d);
  // Outcome coefficients and unit draws use a separate stream.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double coef_scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
  Vector w0(spec.d);
  Vector w1(spec.d);
  for (int k = 0; k < spec.d; ++k) w0[k] = normal(rng) * coef_scale;
  for (int k = 0; k < spec.d; ++k) w1[k] = normal(rng) * coef_scale;

  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    CausalDataset data;
    data.X.resize(spec.N, spec.d);
    data.t.resize(spec.N);
    data.y.resize(spec.N);
    data.mu0 = Vector(spec.N);
    data.mu1 = Vector(spec.N);
    data.tau = Vector(spec.N);
    for (int i = 0; i < spec.N; ++i) {
      for (int k = 0; k < spec.d; ++k) data.X(i, k) = normal(rng);
      const double hidden = normal(rng);
      const Vector x = data.X.row(i).transpose();
      const double logit = spec.bias_strength * theta.dot(x) + spec.hidden_strength * hidden;
      const double propensity = 1.0 / (1.0 + std::exp(-logit));
      data.t[i] = uniform(rng) < propensity ? 1 : 0;
      const double base = w0.dot(x) + std::sin(w1.dot(x)) + spec.hidden_strength * hidden;
      const double effect = 1.0 + x[0];
      (*data.mu0)[i] = base;
      (*data.mu1)[i] = base + effect;
      (*data.tau)[i] = (*data.mu1)[i] - (*data.mu0)[i];
      const double mu = data.t[i] == 1 ? (*data.mu1)[i] : (*data.mu0)[i];
      data.y[i] = mu + spec.noise_std * normal(rng);
    }
    const Eigen::Index treated = data.treated_count();
    if (treated > 0 && treated < spec.N) return data;
  }
  Fail(ErrorKind::kGeneration, "a treatment group stayed empty after " +
                                   std::to_string(kMaxResamples) + " resamples");
}

std::string DatasetToCsv(const CausalDataset& data) {
  std::string out;
  for (Eigen::Index k = 0; k < data.dim(); ++k) out += "x" + std::to_string(k) + ",";
  out += "t,y";
  if (data.mu0) out += ",mu0,mu1";
  out += "\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index k = 0; k < data.dim(); ++k) {
      AppendNumber(out, data.X(i, k));
      out += ',';
    }
    out += data.t[i] == 1 ? "1," : "0,";
    AppendNumber(out, data.y[i]);
    if (data.mu0) {
      out += ',';
      AppendNumber(out, (*data.mu0)[i]);
      out += ',';
      AppendNumber(out, (*data.mu1)[i]);
    }
    out += '\n';
  }
  return out;
}

CausalDataset DatasetFromCsv(const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  Require(static_cast<bool>(std::getline(stream, line)), ErrorKind::kSchema,
          "missing header row");
  const std::vector<std::string> header = SplitCells(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = c;
  int d = 0;
  while (column.count("x" + std::to_string(d))) ++d;
  Require(d >= 1, ErrorKind::kSchema, "missing column 'x0'");
  for (const char* name : {"t", "y"}) {
    Require(column.count(name) > 0, ErrorKind::kSchema,
            std::string("missing column '") + name + "'");
  }
  const bool has_mu0 = column.count("mu0") > 0;
  const bool has_mu1 = column.count("mu1") > 0;
  if (has_mu0 != has_mu1) {
    Fail(ErrorKind::kSchema, std::string("missing column '") + (has_mu0 ? "mu1" : "mu0") + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> treatment;
  std::size_t row_number = 0;
  while (std::getline(stream, line)) {
    ++row_number;
    if (Trim(line).empty()) continue;
    const std::vector<std::string> cells = SplitCells(line);
    Require(cells.size() == header.size(), ErrorKind::kParse,
            "row " + std::to_string(row_number) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      values[c] = ParseCell(cells[c], row_number, header[c]);
    }
    const double t_value = values[column["t"]];
    Require(t_value == 0.0 || t_value == 1.0, ErrorKind::kValidation,
            "row " + std::to_string(row_number) + ": t must be 0 or 1");
    treatment.push_back(static_cast<int>(t_value));
    rows.push_back(std::move(values));
  }

  CausalDataset data;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  data.X.resize(n, d);
  data.y.resize(n);
  data.t = std::move(treatment);
  if (has_mu0) {
    data.mu0 = Vector(n);
    data.mu1 = Vector(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) data.X(i, k) = rows[i][column["x" + std::to_string(k)]];
    data.y[i] = rows[i][column["y"]];
    if (has_mu0) {
      (*data.mu0)[i] = rows[i][column["mu0"]];
      (*data.mu1)[i] = rows[i][column["mu1"]];
    }
  }
  if (has_mu0) data.tau = *data.mu1 - *data.mu0;
  data.Validate();
  return data;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream contents;
  contents << in.rdbuf();
  return contents.str();
}

void WriteFile(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path + "'");
  out << contents;
  Require(static_cast<bool>(out), ErrorKind::kIo, "failed writing '" + path + "'");
}

void SaveDatasetCsv(const CausalDataset& data, const std::string& path) {
  WriteFile(path, DatasetToCsv(data));
}

CausalDataset LoadDatasetCsv(const std::string& path) { return DatasetFromCsv(ReadFile(path)); }

SplitIndices StratifiedSplit(const std::vector<int>& t, const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
  Require(ratios[0] > 0.0 && ratios[1] > 0.0 && ratios[2] > 0.0 &&
              std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9,
          ErrorKind::kConfig, "split ratios must be positive and sum to 1");
  std::vector<Eigen::Index> groups[2];
  for (std::size_t i = 0; i < t.size(); ++i) {
    Require(t[i] == 0 || t[i] == 1, ErrorKind::kValidation, "treatment must be 0 or 1");
    groups[t[i]].push_back(static_cast<Eigen::Index>(i));
  }
  const Eigen::Index total = static_cast<Eigen::Index>(t.size());
  const Eigen::Index n_valid =
      std::max<Eigen::Index>(1, std::llround(ratios[1] * static_cast<double>(total)));
  const Eigen::Index n_test =
      std::max<Eigen::Index>(1, std::llround(ratios[2] * static_cast<double>(total)));
  Require(n_valid + n_test < total, ErrorKind::kSplit, "dataset too small to split");
  const Eigen::Index treated = static_cast<Eigen::Index>(groups[1].size());
  // Nearest-integer treated share of a split of the given size.
  const auto share = [&](Eigen::Index split_size) {
    return (2 * treated * split_size + total) / (2 * total);
  };
  const Eigen::Index valid_treated = share(n_valid);
  const Eigen::Index test_treated = share(n_test);
  const Eigen::Index counts[2][2] = {
      {n_valid - valid_treated, n_test - test_treated},
      {valid_treated, test_treated}};
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (int g : {1, 0}) {
    std::vector<Eigen::Index>& members = groups[g];
    const Eigen::Index size = static_cast<Eigen::Index>(members.size());
    Require(size >= 3, ErrorKind::kSplit,
            std::string(g == 1 ? "treated" : "untreated") + " group has " +
                std::to_string(size) + " units; at least 3 are needed");
    std::shuffle(members.begin(), members.end(), rng);
    const Eigen::Index g_valid = counts[g][0];
    const Eigen::Index g_test = counts[g][1];
    Require(g_valid + g_test < size, ErrorKind::kSplit, "group too small to split");
    const Eigen::Index n_train = size - g_valid - g_test;
    out.train.insert(out.train.end(), members.begin(), members.begin() + n_train);
    out.valid.insert(out.valid.end(), members.begin() + n_train,
                     members.begin() + n_train + g_valid);
    out.test.insert(out.test.end(), members.begin() + n_train + g_valid, members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplits SplitDataset(const CausalDataset& data, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  data.Validate();
  const SplitIndices idx = StratifiedSplit(data.t, ratios, seed);
  return {data.Subset(idx.train), data.Subset(idx.valid), data.Subset(idx.test)};
}

double StandardizedMeanDifference(const CausalDataset& data, const Vector& direction) {
  Require(direction.size() == data.dim(), ErrorKind::kShape, "direction dimension mismatch");
  const Vector score = data.X * direction;
  double sum[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    sum[data.t[i]] += score[i];
    count[data.t[i]] += 1.0;
  }
  Require(count[0] > 1 && count[1] > 1, ErrorKind::kValidation, "groups too small");
  const double mean[2] = {sum[0] / count[0], sum[1] / count[1]};
  double sq[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    sq[data.t[i]] += std::pow(score[i] - mean[data.t[i]], 2);
  }
  const double pooled = std::sqrt(0.5 * (sq[0] / (count[0] - 1) + sq[1] / (count[1] - 1)));
  return (mean[1] - mean[0]) / pooled;
}

}  // namespace escfr
