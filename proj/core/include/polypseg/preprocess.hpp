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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polypseg/dataset.hpp"
#include "polypseg/image.hpp"
#include "polypseg/rng.hpp"
#include "polypseg/tensor.hpp"

namespace polypseg::preprocess {

inline constexpr int kDefaultSide = 256;

struct ProcessedSample {
  std::string id;
  ImageF image;   // side x side x 3, values in [0, 1]
  Mask mask;      // side x side, {0, 1}
  ImageF onehot;  // side x side x 2, (background, polyp)
};

struct AugmentPolicy {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double rot_degrees = 15.0;  // rotation drawn from [-rot_degrees, rot_degrees]
  double scale_min = 0.9;
  double scale_max = 1.1;
  std::uint64_t seed = 0;

  /// Throws kConfig when a field is out of range.
  void validate() const;
};

/// One realized augmentation.
struct AugmentDraw {
  bool hflip = false;
  bool vflip = false;
  double angle_degrees = 0.0;
  double scale = 1.0;

  bool is_identity() const { return !hflip && !vflip && angle_degrees == 0.0 && scale == 1.0; }
};

/// Bicubic for the image, nearest-neighbour for the mask. Returns the input
/// unchanged when it is already side x side.
data::RawSample resize_pair(const data::RawSample& sample, int side);

ImageF normalize(const ImageU8& image);
/// Integer input is range-checked; values outside [0,255] raise kValidation.
ImageF normalize(const Image<int>& image);

/// Channel 0 = background (1 - mask), channel 1 = polyp (mask).
ImageF one_hot(const Mask& mask);

/// resize_pair + normalize + one_hot.
ProcessedSample prepare_sample(const data::RawSample& raw, int side = kDefaultSide);

/// Draws flips, angle and scale from `policy` using `rng`.
AugmentDraw draw_augment(const AugmentPolicy& policy, Rng& rng);

/// Applies flips, then a rotation/scale about the image centre. The image is
/// resampled bicubically with edge replication, the mask with nearest
/// neighbour and zero fill; the one-hot target is rebuilt from the mask.
ProcessedSample augment(const ProcessedSample& sample, const AugmentDraw& draw);
ProcessedSample augment(const ProcessedSample& sample, const AugmentPolicy& policy, Rng& rng);

/// Stacks samples into (batch, 3, side, side) images and (batch, 2, side,
/// side) one-hot targets.
Tensor<float> stack_images(std::span<const ProcessedSample> samples);
Tensor<float> stack_onehot(std::span<const ProcessedSample> samples);

}  // namespace polypseg::preprocess
