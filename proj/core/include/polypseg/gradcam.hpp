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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polypseg/image.hpp"
#include "polypseg/tensor.hpp"
#include "polypseg/unet.hpp"

namespace polypseg::explain {

struct Heatmap {
  ImageF values;  // H x W x 1, in [0, 1]
  std::string source_tap;
  std::string target = "polyp";
};

/// Grad-CAM for the polyp class of a segmentation network.
///
/// The scalar target is the sum of polyp logits over pixels predicted as
/// polyp, or over all pixels when nothing is predicted. Channel weights are
/// the spatial mean of d(target)/d(activation) at `tap`; the map is
/// ReLU(sum_k w_k A_k), bilinearly resized to the input and min-max
/// normalized. A constant map yields all zeros.
///
/// `image` is (1, C, H, W). An empty `tap` selects the last decoder block.
/// Throws Error{kLookup} for unknown taps.
template <typename T>
Heatmap gradcam(const model::UNet<T>& model, const Tensor<T>& image, std::string_view tap = {});

/// The un-normalized, un-resized map ReLU(sum_k w_k A_k) at tap resolution.
template <typename T>
ImageF gradcam_raw(const model::UNet<T>& model, const Tensor<T>& image, std::string_view tap = {});

/// Min-max normalization to [0, 1]; constant maps become all zeros.
ImageF minmax_normalize(const ImageF& map);

/// Bilinear resize of a single-channel float map.
ImageF resize_bilinear(const ImageF& map, int height, int width);

using Colormap = std::array<std::array<std::uint8_t, 3>, 256>;

/// Blue -> green -> red ramp bundled with the library.
const Colormap& default_colormap();
Colormap parse_colormap_csv(const std::string& text);
Colormap load_colormap(const std::filesystem::path& path);

struct OverlayImage {
  ImageU8 rgb;
  double alpha = 0.5;
};

/// out = round((1 - alpha) * image + alpha * lut[round(255 v)]).
/// kValidation on extent mismatch or alpha outside [0, 1].
OverlayImage overlay(const ImageU8& image, const Heatmap& heatmap, double alpha = 0.5,
                     const Colormap& lut = default_colormap());

/// Heatmap as 8-bit gray, value = round(255 v).
ImageU8 heatmap_to_gray(const Heatmap& heatmap);

struct Coverage {
  double value = 0.0;
  bool degenerate = false;  // heatmap carried no mass
};

/// Fraction of heatmap mass inside the ground-truth region. kValidation for
/// an empty ground truth or mismatched extents.
Coverage attention_coverage(const Heatmap& heatmap, const Mask& truth);

extern template Heatmap gradcam<float>(const model::UNet<float>&, const Tensor<float>&, std::string_view);
extern template Heatmap gradcam<double>(const model::UNet<double>&, const Tensor<double>&, std::string_view);

}  // namespace polypseg::explain
