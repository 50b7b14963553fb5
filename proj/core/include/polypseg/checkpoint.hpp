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

// Checkpoint archive layout (all integers little-endian):
//
//   "PSEGCKPT"            8-byte magic
//   u32 version           currently 1
//   u64 header_size
//   header                JSON: model config, training state scalars, and a
//                         tensor index {name, shape, offset, count}
//   payload               raw float32 tensor data referenced by the index
//   sha256                32 bytes over everything above
//
// Parameters are stored bit-for-bit, so a reloaded model reproduces the
// forward pass of the saved one exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "polypseg/tensor.hpp"
#include "polypseg/unet.hpp"

namespace polypseg::train {

struct TrainingState {
  int epoch = -1;  // last completed epoch, -1 before training
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  std::uint64_t optimizer_step = 0;
  std::vector<Tensor<float>> adam_m;  // empty or one per parameter
  std::vector<Tensor<float>> adam_v;
};

struct LoadedCheckpoint {
  model::UNet<float> model;
  TrainingState state;
};

void save_checkpoint(const std::filesystem::path& path, const model::UNet<float>& model,
                     const TrainingState& state);

/// Throws Error{kIo} when the file cannot be opened and Error{kIntegrity}
/// for a bad magic, truncation, or checksum mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace polypseg::train
