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

#include "polypseg/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "polypseg/error.hpp"

namespace polypseg::explain {
namespace detail {
extern const char kColormapCsv[];
}  // namespace detail

namespace {

template <typename T>
const std::string& resolve_tap(const model::UNet<T>& model, std::string_view tap) {
  if (tap.empty()) return model.last_decoder_tap();
  for (const auto& name : model.tap_names()) {
    if (name == tap) return name;
  }
  fail(ErrorKind::kLookup, "unknown activation tap: " + std::string(tap));
}

}  // namespace

template <typename T>
ImageF gradcam_raw(const model::UNet<T>& model, const Tensor<T>& image, std::string_view tap) {
  if (model.config().num_classes != 2) {
    fail(ErrorKind::kCapability, "Grad-CAM target needs a two-class (background, polyp) head");
  }
  if (image.batch() != 1) fail(ErrorKind::kShape, "gradcam takes a single image, got " + shape_string(image.shape()));
  const std::string& tap_name = resolve_tap(model, tap);

  auto capture = model.forward_with_taps(image);
  const auto& probs = capture.prediction().probs;

  // d(target)/d(logits): 1 on the polyp channel over the selected pixels.
  Tensor<T> grad_logits(1, 2, probs.height(), probs.width());
  const T* bg = probs.channel(0, 0);
  const T* fg = probs.channel(0, 1);
  T* sel = grad_logits.channel(0, 1);
  bool any = false;
  for (std::size_t i = 0; i < probs.plane(); ++i) {
    if (fg[i] > bg[i]) {
      sel[i] = T{1};
      any = true;
    }
  }
  if (!any) std::fill(sel, sel + probs.plane(), T{1});

  capture.backward(grad_logits, nullptr, std::string_view(tap_name));
  const Tensor<T>& act = capture.activation(tap_name);
  const Tensor<T>& grad = capture.gradient(tap_name);

  const std::size_t plane = act.plane();
  std::vector<double> weighted(plane, 0.0);
  for (int k = 0; k < act.channels(); ++k) {
    const T* g = grad.channel(0, k);
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += g[i];
    alpha /= static_cast<double>(plane);
    if (alpha == 0.0) continue;
    const T* a = act.channel(0, k);
    for (std::size_t i = 0; i < plane; ++i) weighted[i] += alpha * a[i];
  }
  ImageF map(act.height(), act.width(), 1);
  for (std::size_t i = 0; i < plane; ++i) map.data[i] = static_cast<float>(std::max(0.0, weighted[i]));
  return map;
}

template <typename T>
Heatmap gradcam(const model::UNet<T>& model, const Tensor<T>& image, std::string_view tap) {
  ImageF raw = gradcam_raw(model, image, tap);
  if (!raw.same_extent(image.height(), image.width())) raw = resize_bilinear(raw, image.height(), image.width());
  Heatmap out;
  out.values = minmax_normalize(raw);
  out.source_tap = resolve_tap(model, tap);
  return out;
}

template ImageF gradcam_raw<float>(const model::UNet<float>&, const Tensor<float>&, std::string_view);
template ImageF gradcam_raw<double>(const model::UNet<double>&, const Tensor<double>&, std::string_view);
template Heatmap gradcam<float>(const model::UNet<float>&, const Tensor<float>&, std::string_view);
template Heatmap gradcam<double>(const model::UNet<double>&, const Tensor<double>&, std::string_view);

ImageF minmax_normalize(const ImageF& map) {
  ImageF out(map.height, map.width, map.channels);
  if (map.data.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.data.begin(), map.data.end());
  const double min = *lo, max = *hi;
  if (!(max > min)) return out;
  const double scale = 1.0 / (max - min);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    out.data[i] = static_cast<float>(std::clamp((map.data[i] - min) * scale, 0.0, 1.0));
  }
  return out;
}

ImageF resize_bilinear(const ImageF& map, int height, int width) {
  if (map.channels != 1) fail(ErrorKind::kValidation, "resize_bilinear expects a single-channel map");
  if (map.same_extent(height, width)) return map;
  cv::Mat src(map.height, map.width, CV_32FC1, const_cast<float*>(map.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  ImageF out(height, width, 1);
  for (int y = 0; y < height; ++y) std::copy_n(dst.ptr<float>(y), width, &out.at(y, 0));
  return out;
}

Colormap parse_colormap_csv(const std::string& text) {
  Colormap lut{};
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    if (row >= lut.size()) fail(ErrorKind::kValidation, "colormap has more than 256 rows");
    std::istringstream fields(line);
    std::string cell;
    for (int c = 0; c < 3; ++c) {
      if (!std::getline(fields, cell, ',')) fail(ErrorKind::kValidation, "colormap row needs 3 values");
      const int v = std::stoi(cell);
      if (v < 0 || v > 255) fail(ErrorKind::kValidation, "colormap value out of range");
      lut[row][c] = static_cast<std::uint8_t>(v);
    }
    ++row;
  }
  if (row != lut.size()) fail(ErrorKind::kValidation, "colormap needs exactly 256 rows, got " + std::to_string(row));
  return lut;
}

const Colormap& default_colormap() {
  static const Colormap lut = parse_colormap_csv(detail::kColormapCsv);
  return lut;
}

Colormap load_colormap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read colormap: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_colormap_csv(text.str());
}

OverlayImage overlay(const ImageU8& image, const Heatmap& heatmap, double alpha, const Colormap& lut) {
  if (image.channels != 3) fail(ErrorKind::kValidation, "overlay expects an RGB image");
  if (!heatmap.values.same_extent(image.height, image.width)) {
    fail(ErrorKind::kValidation, "heatmap and image extents differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::kValidation, "overlay alpha must lie in [0, 1]");
  OverlayImage out{ImageU8(image.height, image.width, 3), alpha};
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    const double v = std::clamp(static_cast<double>(heatmap.values.data[p]), 0.0, 1.0);
    const auto& colour = lut[static_cast<std::size_t>(std::lround(255.0 * v))];
    for (int c = 0; c < 3; ++c) {
      const double blended = (1.0 - alpha) * image.data[3 * p + c] + alpha * colour[c];
      out.rgb.data[3 * p + c] = static_cast<std::uint8_t>(std::clamp(std::lround(blended), 0L, 255L));
    }
  }
  return out;
}

ImageU8 heatmap_to_gray(const Heatmap& heatmap) {
  ImageU8 out(heatmap.values.height, heatmap.values.width, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(heatmap.values.data[i]), 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

Coverage attention_coverage(const Heatmap& heatmap, const Mask& truth) {
  if (!heatmap.values.same_extent(truth.height, truth.width)) {
    fail(ErrorKind::kValidation, "heatmap and mask extents differ");
  }
  double total = 0.0, inside = 0.0;
  bool any_truth = false;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const double v = heatmap.values.data[i];
    total += v;
    if (truth.data[i]) {
      inside += v;
      any_truth = true;
    }
  }
  if (!any_truth) fail(ErrorKind::kValidation, "attention coverage is undefined for an empty ground truth");
  if (total <= 0.0) return {0.0, true};
  return {inside / total, false};
}

}  // namespace polypseg::explain
