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

#ifndef ESCFR_EVAL_H_
#define ESCFR_EVAL_H_

#include <optional>
#include <string>
#include <vector>

#include "escfr/data.h"

namespace escfr {

struct PeheResult {
  double pehe = 0.0;       // mean squared CATE error
  double sqrt_pehe = 0.0;
};

PeheResult PeheMetrics(const Vector& tau_hat, const Vector& tau_true);

// Area under the uplift curve. Units are ranked by tau_hat descending (ties
// by ascending index). For each prefix of size k,
//   u(k) = (mean y over treated in prefix - mean y over untreated in prefix) * k / N
// with an empty group's mean taken as 0. The result is sum_k u(k) / N
// divided by u(N), or 0.5 when u(N) == 0. A random ranking scores about 0.5.
double Auuc(const Vector& tau_hat, const std::vector<int>& t, const Vector& y);

double FactualRmse(const Vector& yhat_factual, const Vector& y);

struct MetricReport {
  std::optional<double> pehe;
  std::optional<double> sqrt_pehe;
  double auuc = 0.5;
  double factual_rmse = 0.0;
  std::string split;
};

// PEHE fields are filled only when `data.tau` is present.
MetricReport EvaluateEstimates(const Vector& tau_hat, const Vector& yhat_factual,
                               const CausalDataset& data, const std::string& split);

}  // namespace escfr

#endif  // ESCFR_EVAL_H_
