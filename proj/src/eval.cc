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

#include "escfr/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "escfr/status.h"

namespace escfr {

PeheResult PeheMetrics(const Vector& tau_hat, const Vector& tau_true) {
  Require(tau_hat.size() == tau_true.size(), ErrorKind::kShape,
          "tau_hat and tau_true have different lengths");
  Require(tau_hat.size() > 0, ErrorKind::kInput, "PEHE of an empty sample");
  PeheResult out;
  out.pehe = (tau_hat - tau_true).squaredNorm() / static_cast<double>(tau_hat.size());
  out.sqrt_pehe = std::sqrt(out.pehe);
  return out;
}

double Auuc(const Vector& tau_hat, const std::vector<int>& t, const Vector& y) {
  const Eigen::Index n = tau_hat.size();
  Require(static_cast<Eigen::Index>(t.size()) == n && y.size() == n, ErrorKind::kShape,
          "tau_hat, t and y have different lengths");
  const auto treated = std::count(t.begin(), t.end(), 1);
  Require(treated > 0 && treated < n, ErrorKind::kMetric,
          "AUUC needs both treatment groups");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&tau_hat](Eigen::Index l, Eigen::Index r) { return tau_hat[l] > tau_hat[r]; });

  const double total = static_cast<double>(n);
  double sum_y[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  double area = 0.0;
  double uplift = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index unit = order[k];
    const int arm = t[unit];
    Require(arm == 0 || arm == 1, ErrorKind::kMetric, "treatment must be 0 or 1");
    sum_y[arm] += y[unit];
    count[arm] += 1.0;
    const double mean_treated = count[1] > 0 ? sum_y[1] / count[1] : 0.0;
    const double mean_untreated = count[0] > 0 ? sum_y[0] / count[0] : 0.0;
    uplift = (mean_treated - mean_untreated) * static_cast<double>(k + 1) / total;
    area += uplift;
  }
  if (uplift == 0.0) return 0.5;
  return (area / total) / uplift;
}

double FactualRmse(const Vector& yhat_factual, const Vector& y) {
  Require(yhat_factual.size() == y.size(), ErrorKind::kShape,
          "predictions and outcomes have different lengths");
  Require(y.size() > 0, ErrorKind::kInput, "RMSE of an empty sample");
  return std::sqrt((yhat_factual - y).squaredNorm() / static_cast<double>(y.size()));
}

MetricReport EvaluateEstimates(const Vector& tau_hat, const Vector& yhat_factual,
                               const CausalDataset& data, const std::string& split) {
  MetricReport report;
  report.split = split;
  if (data.tau) {
    const PeheResult pehe = PeheMetrics(tau_hat, *data.tau);
    report.pehe = pehe.pehe;
    report.sqrt_pehe = pehe.sqrt_pehe;
  }
  report.auuc = Auuc(tau_hat, data.t, data.y);
  report.factual_rmse = FactualRmse(yhat_factual, data.y);
  return report;
}

}  // namespace escfr
