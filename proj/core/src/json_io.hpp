// Copyright 2026 The polypseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON conversions shared by checkpoints and run configs (private header).

#pragma once

#include <json.hpp>

#include "polypseg/unet.hpp"

namespace polypseg::detail {

inline nlohmann::ordered_json to_json(const model::UNetConfig& c) {
  nlohmann::ordered_json j;
  j["in_channels"] = c.in_channels;
  j["num_classes"] = c.num_classes;
  j["encoder_widths"] = c.encoder_widths;
  j["bottleneck_width"] = c.bottleneck_width;
  j["conv_kernel"] = c.conv_kernel;
  j["pool_factor"] = c.pool_factor;
  j["seed"] = c.seed;
  return j;
}

inline model::UNetConfig unet_config_from_json(const nlohmann::json& j) {
  model::UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.bottleneck_width = j.at("bottleneck_width").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.pool_factor = j.at("pool_factor").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace polypseg::detail
