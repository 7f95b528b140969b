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

#include "escfr/checkpoint.h"

#include <cstdio>

#include "escfr/data.h"
#include "escfr/status.h"

namespace escfr {
namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "escfr-checkpoint";

json LayersToJson(const std::vector<Layer>& layers) {
  json out = json::array();
  for (const Layer& layer : layers) {
    out.push_back({{"rows", layer.weight.rows()},
                   {"cols", layer.weight.cols()},
                   {"weight", std::vector<double>(layer.weight.data(),
                                                  layer.weight.data() + layer.weight.size())},
                   {"bias", std::vector<double>(layer.bias.data(),
                                                layer.bias.data() + layer.bias.size())}});
  }
  return out;
}

std::vector<Layer> LayersFromJson(const json& value) {
  std::vector<Layer> layers;
  for (const json& item : value) {
    const Eigen::Index rows = item.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = item.at("cols").get<Eigen::Index>();
    const auto weight = item.at("weight").get<std::vector<double>>();
    const auto bias = item.at("bias").get<std::vector<double>>();
    Require(static_cast<Eigen::Index>(weight.size()) == rows * cols &&
                static_cast<Eigen::Index>(bias.size()) == cols,
            ErrorKind::kSchema, "checkpoint layer arrays do not match their shape");
    Layer layer;
    layer.weight = Eigen::Map<const Matrix>(weight.data(), rows, cols);
    layer.bias = Eigen::Map<const Vector>(bias.data(), cols);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

json ToJson(const Checkpoint& checkpoint) {
  const TarnetParams& p = checkpoint.params;
  return json{{"format", kFormatTag},
              {"version", kCheckpointVersion},
              {"activation", ActivationName(p.activation)},
              {"outcome_mean", p.outcome_mean},
              {"outcome_scale", p.outcome_scale},
              {"config_hash", checkpoint.config_hash},
              {"split_seed", checkpoint.split_seed},
              {"psi", LayersToJson(p.psi)},
              {"head0", LayersToJson(p.head0)},
              {"head1", LayersToJson(p.head1)}};
}

Checkpoint CheckpointFromJson(const json& value) {
  try {
    Require(value.at("format").get<std::string>() == kFormatTag, ErrorKind::kSchema,
            "not an escfr checkpoint");
    Require(value.at("version").get<int>() == kCheckpointVersion, ErrorKind::kSchema,
            "unsupported checkpoint version");
    Checkpoint checkpoint;
    TarnetParams& p = checkpoint.params;
    p.activation = ParseActivation(value.at("activation").get<std::string>());
    p.outcome_mean = value.at("outcome_mean").get<double>();
    p.outcome_scale = value.at("outcome_scale").get<double>();
    p.psi = LayersFromJson(value.at("psi"));
    p.head0 = LayersFromJson(value.at("head0"));
    p.head1 = LayersFromJson(value.at("head1"));
    checkpoint.config_hash = value.at("config_hash").get<std::string>();
    checkpoint.split_seed = value.at("split_seed").get<std::uint64_t>();
    p.Validate();
    return checkpoint;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kSchema, std::string("malformed checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path) {
  WriteFile(path, ToJson(checkpoint).dump() + "\n");
}

Checkpoint LoadCheckpoint(const std::string& path) {
  const std::string text = ReadFile(path);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kParse, "checkpoint '" + path + "': " + e.what());
  }
  return CheckpointFromJson(value);
}

std::string ContentHash(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

}  // namespace escfr
