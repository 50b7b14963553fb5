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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "polypseg/image.hpp"
#include "polypseg/tensor.hpp"

namespace polypseg::metrics {

inline constexpr double kDefaultDiceEps = 1e-6;

/// kForeground scores only the polyp channel; kClassMean averages the soft
/// Dice loss of both channels.
enum class DiceMode { kForeground, kClassMean };

struct LossValue {
  double value = 0.0;
  double eps = kDefaultDiceEps;
};

/// L = 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), with the sums taken
/// over every pixel of every batch item (one pooled ratio per class).
/// `probs` and `onehot` are (B, 2, H, W). When `grad_probs` is non-null it
/// receives dL/dprobs with the same shape. kValidation on shape mismatch.
template <typename T>
LossValue soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot, double eps = kDefaultDiceEps,
                         DiceMode mode = DiceMode::kForeground, Tensor<T>* grad_probs = nullptr);

/// Per-pixel argmax of a two-channel probability map for batch item `n`;
/// an exact tie goes to background.
template <typename T>
Mask binarize_prediction(const Tensor<T>& probs, int n = 0);

/// Overlap counts of two binary masks.
struct Confusion {
  std::uint64_t intersection = 0;
  std::uint64_t pred = 0;
  std::uint64_t truth = 0;

  std::uint64_t union_size() const { return pred + truth - intersection; }
};

/// kValidation when shapes differ or a mask is not binary.
Confusion confusion(const Mask& pred, const Mask& truth);

/// |P n G| / |P u G|; 1 when both masks are empty.
double iou(const Mask& pred, const Mask& truth);
double iou(const Confusion& c);

/// 2 |P n G| / (|P| + |G|); 1 when both masks are empty.
double dice_f(const Mask& pred, const Mask& truth);
double dice_f(const Confusion& c);

enum class MetricScope { kPerImage, kEpochMean, kSplitMean };
std::string_view to_string(MetricScope scope);

struct MetricRecord {
  double iou = 0.0;
  double f_dice = 0.0;
  std::size_t n_images = 0;
  MetricScope scope = MetricScope::kPerImage;
};

/// Running per-image mean of IoU and Dice-F.
class MetricAccumulator {
 public:
  void add(const Mask& pred, const Mask& truth);
  void add(double iou_value, double dice_value);
  MetricRecord mean(MetricScope scope) const;
  std::size_t count() const { return n_; }

 private:
  double iou_sum_ = 0.0;
  double dice_sum_ = 0.0;
  std::size_t n_ = 0;
};

}  // namespace polypseg::metrics
