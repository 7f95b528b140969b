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

#include "escfr/baselines.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "escfr/status.h"

namespace escfr {

Vector RidgeModel::Predict(const Matrix& X, int treatment) const {
  const Eigen::Index d = weights.size() - 1;
  Require(X.cols() == d, ErrorKind::kShape, "query dimension does not match the model");
  Vector out = X * weights.head(d);
  out.array() += intercept + weights[d] * static_cast<double>(treatment);
  return out;
}

Vector RidgeModel::PredictCate(const Matrix& X) const {
  Require(X.cols() == weights.size() - 1, ErrorKind::kShape,
          "query dimension does not match the model");
  return Vector::Constant(X.rows(), treatment_coefficient());
}

RidgeModel OlsSLearner(const CausalDataset& data, double ridge) {
  Require(ridge >= 0.0, ErrorKind::kConfig, "ridge strength must be nonnegative");
  Require(data.size() > 0, ErrorKind::kInput, "empty dataset");
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  // Columns: intercept, covariates, treatment.
  Matrix design(n, d + 2);
  design.col(0).setOnes();
  design.middleCols(1, d) = data.X;
  for (Eigen::Index i = 0; i < n; ++i) design(i, d + 1) = data.t[i];

  Matrix gram = design.transpose() * design;
  gram.diagonal().tail(d + 1).array() += ridge;
  const Vector rhs = design.transpose() * data.y;
  Vector coef;
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    Require(qr.rank() == design.cols(), ErrorKind::kLinearAlgebra,
            "design matrix is rank deficient; use ridge > 0");
    coef = qr.solve(data.y);
  } else {
    Eigen::LDLT<Matrix> ldlt(gram);
    Require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorKind::kLinearAlgebra,
            "normal equations are singular");
    coef = ldlt.solve(rhs);
  }
  Require(coef.allFinite(), ErrorKind::kLinearAlgebra, "non-finite regression coefficients");
  RidgeModel model;
  model.intercept = coef[0];
  model.weights = coef.tail(d + 1);
  model.ridge = ridge;
  return model;
}

Vector KnnOutcome(const CausalDataset& data, int k, const Matrix& query, int treatment) {
  Require(k >= 1, ErrorKind::kConfig, "k must be >= 1");
  Require(treatment == 0 || treatment == 1, ErrorKind::kConfig, "treatment must be 0 or 1");
  Require(query.cols() == data.dim(), ErrorKind::kShape, "query dimension mismatch");
  std::vector<Eigen::Index> group;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (data.t[i] == treatment) group.push_back(i);
  }
  Require(static_cast<int>(group.size()) >= k, ErrorKind::kConfig,
          "k = " + std::to_string(k) + " exceeds the " +
              (treatment == 1 ? "treated" : "untreated") + " group size " +
              std::to_string(group.size()));
  Vector out(query.rows());
  std::vector<std::pair<double, Eigen::Index>> ranked;
  ranked.reserve(group.size());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    ranked.clear();
    for (Eigen::Index i : group) {
      ranked.emplace_back((data.X.row(i) - query.row(q)).squaredNorm(), i);
    }
    // Pairs compare by distance, then by row index.
    std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += data.y[ranked[j].second];
    out[q] = sum / k;
  }
  return out;
}

Vector KnnCate(const CausalDataset& data, int k, const Matrix& query) {
  return KnnOutcome(data, k, query, 1) - KnnOutcome(data, k, query, 0);
}

}  // namespace escfr
