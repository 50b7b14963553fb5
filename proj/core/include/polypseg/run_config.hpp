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

// Run configuration. On disk this is JSON; keys may be nested objects or
// dotted names ({"train": {"lr": 1e-4}} and {"train.lr": 1e-4} are the
// same). Unknown keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "polypseg/preprocess.hpp"
#include "polypseg/trainer.hpp"
#include "polypseg/unet.hpp"

namespace polypseg {

struct RunConfig {
  std::filesystem::path dataset_root;
  std::uint64_t split_seed = 0;
  int side = preprocess::kDefaultSide;
  model::UNetConfig model;
  train::TrainConfig train;  // train.augment holds the augmentation policy
  std::filesystem::path output_dir = "runs/default";

  friend bool operator==(const RunConfig&, const RunConfig&);
};

/// All recognised dotted keys, in canonical order.
const std::vector<std::string>& run_config_keys();

/// Throws Error{kConfig} on malformed JSON, unknown keys or bad values.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical form: flat object with dotted keys in run_config_keys() order.
std::string serialize_run_config(const RunConfig& config);

/// Applies `key=value`; the value is parsed as JSON when possible, otherwise
/// taken as a string.
void apply_override(RunConfig& config, std::string_view assignment);

/// SHA-256 hex of serialize_run_config().
std::string config_hash(const RunConfig& config);

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace polypseg
