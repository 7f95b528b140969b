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

#ifndef ESCFR_GEOMETRY_H_
#define ESCFR_GEOMETRY_H_

#include "escfr/ot.h"

namespace escfr {

// Outcomes entering the outcome-calibrated cost. Index i runs over treated
// units and j over untreated units.
struct PairedOutcomes {
  Vector y_treated;          // factual y_i
  Vector y_untreated;        // factual y_j
  Vector yhat_cf_treated;    // untreated-head prediction for treated units
  Vector yhat_cf_untreated;  // treated-head prediction for untreated units

  void Validate(Eigen::Index n_treated, Eigen::Index n_untreated) const;
};

// entries(i, j) = ||A_i - B_j||^2 for row-wise point sets.
Matrix PairwiseSqEuclidean(const Matrix& A, const Matrix& B);

// Squared outcome gaps (yhat_i - y_j)^2 + (yhat_j - y_i)^2; the increment
// that gamma scales in PforCostMatrix.
Matrix OutcomeGap(const PairedOutcomes& outcomes);

// D_repr + gamma * OutcomeGap(outcomes).
Matrix PforCostMatrix(const Matrix& repr_cost, const PairedOutcomes& outcomes, double gamma);

}  // namespace escfr

#endif  // ESCFR_GEOMETRY_H_
