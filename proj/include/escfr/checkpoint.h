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

#ifndef ESCFR_CHECKPOINT_H_
#define ESCFR_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "escfr/nn.h"

namespace escfr {

inline constexpr int kCheckpointVersion = 1;

// JSON container: format tag, version, layer shapes with column-major
// weights, outcome standardization, the training config hash and the seed
// of the train/valid/test split the model was selected on.
struct Checkpoint {
  TarnetParams params;
  std::string config_hash;
  std::uint64_t split_seed = 0;
};

nlohmann::json ToJson(const Checkpoint& checkpoint);
Checkpoint CheckpointFromJson(const nlohmann::json& json);
void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint LoadCheckpoint(const std::string& path);

// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
std::string ContentHash(std::string_view bytes);

}  // namespace escfr

#endif  // ESCFR_CHECKPOINT_H_
