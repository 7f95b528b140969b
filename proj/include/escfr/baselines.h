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

#ifndef ESCFR_BASELINES_H_
#define ESCFR_BASELINES_H_

#include "escfr/data.h"

namespace escfr {

// Linear S-learner: y ~ intercept + <w, x> + w_t * t, ridge-penalized on
// every coefficient except the intercept.
struct RidgeModel {
  Vector weights;  // d covariate weights followed by the treatment weight
  double intercept = 0.0;
  double ridge = 0.0;

  double treatment_coefficient() const { return weights[weights.size() - 1]; }
  Vector Predict(const Matrix& X, int treatment) const;
  // Constant: prediction(x, 1) - prediction(x, 0).
  Vector PredictCate(const Matrix& X) const;
};

inline constexpr double kDefaultRidge = 1e-6;

RidgeModel OlsSLearner(const CausalDataset& data, double ridge = kDefaultRidge);

// tau(x) = mean y of the k nearest treated units - mean y of the k nearest
// untreated units (Euclidean; equal distances resolved by lower row index).
Vector KnnCate(const CausalDataset& data, int k, const Matrix& query);

// Mean y of the k nearest units of arm `treatment` for each query row.
Vector KnnOutcome(const CausalDataset& data, int k, const Matrix& query, int treatment);

}  // namespace escfr

#endif  // ESCFR_BASELINES_H_
