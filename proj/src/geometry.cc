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

#include "escfr/geometry.h"

#include <cmath>
#include <string>

#include "escfr/status.h"

namespace escfr {

void PairedOutcomes::Validate(Eigen::Index n_treated, Eigen::Index n_untreated) const {
  Require(y_treated.size() == n_treated && yhat_cf_treated.size() == n_treated,
          ErrorKind::kShape, "treated outcome vectors must have length " +
                                 std::to_string(n_treated));
  Require(y_untreated.size() == n_untreated && yhat_cf_untreated.size() == n_untreated,
          ErrorKind::kShape, "untreated outcome vectors must have length " +
                                 std::to_string(n_untreated));
  Require(y_treated.allFinite() && y_untreated.allFinite() && yhat_cf_treated.allFinite() &&
              yhat_cf_untreated.allFinite(),
          ErrorKind::kInput, "paired outcomes must be finite");
}

Matrix PairwiseSqEuclidean(const Matrix& A, const Matrix& B) {
  Require(A.cols() == B.cols(), ErrorKind::kShape,
          "point sets have dimensions " + std::to_string(A.cols()) + " and " +
              std::to_string(B.cols()));
  Matrix out(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      out(i, j) = (A.row(i) - B.row(j)).squaredNorm();
    }
  }
  return out;
}

Matrix OutcomeGap(const PairedOutcomes& outcomes) {
  const Eigen::Index n = outcomes.y_treated.size();
  const Eigen::Index m = outcomes.y_untreated.size();
  outcomes.Validate(n, m);
  Matrix gap(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double untreated_gap = outcomes.yhat_cf_treated[i] - outcomes.y_untreated[j];
      const double treated_gap = outcomes.yhat_cf_untreated[j] - outcomes.y_treated[i];
      gap(i, j) = untreated_gap * untreated_gap + treated_gap * treated_gap;
    }
  }
  return gap;
}

Matrix PforCostMatrix(const Matrix& repr_cost, const PairedOutcomes& outcomes, double gamma) {
  Require(gamma >= 0.0 && std::isfinite(gamma), ErrorKind::kConfig,
          "gamma must be nonnegative and finite");
  outcomes.Validate(repr_cost.rows(), repr_cost.cols());
  if (gamma == 0.0) return repr_cost;
  return repr_cost + gamma * OutcomeGap(outcomes);
}

}  // namespace escfr
