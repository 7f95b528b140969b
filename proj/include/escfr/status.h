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

#ifndef ESCFR_STATUS_H_
#define ESCFR_STATUS_H_

#include <stdexcept>
#include <string>

namespace escfr {

enum class ErrorKind {
  kShape,
  kInfeasibleInput,
  kNumericalFailure,
  kConfig,
  kInput,
  kSchema,
  kParse,
  kValidation,
  kStratification,
  kLinearAlgebra,
  kMetric,
  kSpec,
  kGeneration,
  kSplit,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// All library failures are reported as escfr::Error. The kind drives the CLI
// exit code: numerical failures exit 3, everything else exits 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string& message);

inline void Require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) Fail(kind, message);
}

}  // namespace escfr

#endif  // ESCFR_STATUS_H_
