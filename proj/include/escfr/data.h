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

#ifndef ESCFR_DATA_H_
#define ESCFR_DATA_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "escfr/ot.h"

namespace escfr {

struct CausalDataset {
  Matrix X;             // N x d covariates
  std::vector<int> t;   // 0 / 1
  Vector y;             // factual outcome
  std::optional<Vector> mu0;
  std::optional<Vector> mu1;
  std::optional<Vector> tau;  // mu1 - mu0 when both are present

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  Eigen::Index treated_count() const;

  // Shapes, t in {0,1}, tau consistency and both groups non-empty.
  void Validate() const;

  // Rows in the given order.
  CausalDataset Subset(const std::vector<Eigen::Index>& rows) const;
};

// Synthetic observational study.
//   x ~ N(0, I_d), hidden h ~ N(0, 1)
//   P(T=1 | x, h) = logistic(bias_strength * <theta, x> + hidden_strength * h)
//   mu0 = <w0, x> + sin(<w1, x>) + hidden_strength * h
//   mu1 = mu0 + 1 + x_0
//   y   = mu_T + noise_std * N(0, 1)
// theta is a seeded unit vector; w0, w1 have N(0, 1/d) entries.
struct GenSpec {
  int N = 1000;
  int d = 10;
  double bias_strength = 0.0;
  double hidden_strength = 0.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Direction theta used by the generator for a given seed and dimension.
Vector SelectionDirection(std::uint64_t seed, int d);

CausalDataset GenerateSynthetic(const GenSpec& spec);

// Header x0,...,x{d-1},t,y[,mu0,mu1]; row order preserved; values written
// as shortest round-trip decimal.
std::string DatasetToCsv(const CausalDataset& data);
CausalDataset DatasetFromCsv(const std::string& text);
void SaveDatasetCsv(const CausalDataset& data, const std::string& path);
CausalDataset LoadDatasetCsv(const std::string& path);

struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> valid;
  std::vector<Eigen::Index> test;
};

struct DatasetSplits {
  CausalDataset train;
  CausalDataset valid;
  CausalDataset test;
};

inline constexpr std::array<double, 3> kDefaultSplitRatios = {0.7, 0.15, 0.15};

// Stratified by treatment: valid and test hold round(ratio * N) units (at
// least one), of which round(treated fraction * size) are treated; train takes
// the rest, so every split is within one unit of the global treated fraction.
// Indices within each split are ascending.
SplitIndices StratifiedSplit(const std::vector<int>& t,
                             const std::array<double, 3>& ratios, std::uint64_t seed);

DatasetSplits SplitDataset(const CausalDataset& data,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

// Standardized mean difference of <direction, x> between treated and
// untreated units (pooled standard deviation).
double StandardizedMeanDifference(const CausalDataset& data, const Vector& direction);

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& contents);

}  // namespace escfr

#endif  // ESCFR_DATA_H_
