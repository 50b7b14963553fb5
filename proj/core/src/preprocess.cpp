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

#include "polypseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "polypseg/error.hpp"

namespace polypseg::preprocess {
namespace {

template <typename T>
cv::Mat view_of(Image<T>& image) {
  return cv::Mat(image.height, image.width, CV_MAKETYPE(cv::DataType<T>::depth, image.channels), image.data.data());
}

template <typename T>
Image<T> from_mat(const cv::Mat& mat) {
  Image<T> out(mat.rows, mat.cols, mat.channels());
  const std::size_t row = static_cast<std::size_t>(mat.cols) * mat.channels();
  for (int y = 0; y < mat.rows; ++y) std::copy_n(mat.ptr<T>(y), row, &out.at(y, 0));
  return out;
}

template <typename T>
Image<T> flip(const Image<T>& in, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return in;
  Image<T> out(in.height, in.width, in.channels);
  for (int y = 0; y < in.height; ++y) {
    const int sy = vertical ? in.height - 1 - y : y;
    for (int x = 0; x < in.width; ++x) {
      const int sx = horizontal ? in.width - 1 - x : x;
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace

void AugmentPolicy::validate() const {
  const auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(p_hflip) || !prob_ok(p_vflip)) fail(ErrorKind::kConfig, "flip probabilities must lie in [0, 1]");
  if (!(rot_degrees >= 0.0 && rot_degrees <= 180.0)) fail(ErrorKind::kConfig, "rot_degrees must lie in [0, 180]");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) {
    fail(ErrorKind::kConfig, "scale range must be positive with scale_min <= scale_max");
  }
}

data::RawSample resize_pair(const data::RawSample& sample, int side) {
  if (side < 32) fail(ErrorKind::kPrecondition, "resize side must be >= 32");
  if (!sample.mask.same_extent(sample.image.height, sample.image.width)) {
    fail(ErrorKind::kValidation, "image/mask size mismatch for " + sample.id);
  }
  if (sample.image.same_extent(side, side)) return sample;

  data::RawSample out;
  out.id = sample.id;
  auto image = sample.image;
  auto mask = sample.mask;
  cv::Mat resized_image, resized_mask;
  cv::resize(view_of(image), resized_image, cv::Size(side, side), 0, 0, cv::INTER_CUBIC);
  cv::resize(view_of(mask), resized_mask, cv::Size(side, side), 0, 0, cv::INTER_NEAREST);
  out.image = from_mat<std::uint8_t>(resized_image);
  out.mask = from_mat<std::uint8_t>(resized_mask);
  return out;
}

ImageF normalize(const ImageU8& image) {
  ImageF out(image.height, image.width, image.channels);
  std::transform(image.data.begin(), image.data.end(), out.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return out;
}

ImageF normalize(const Image<int>& image) {
  ImageF out(image.height, image.width, image.channels);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const int v = image.data[i];
    if (v < 0 || v > 255) fail(ErrorKind::kValidation, "pixel value out of [0, 255]: " + std::to_string(v));
    out.data[i] = static_cast<float>(v) / 255.0f;
  }
  return out;
}

ImageF one_hot(const Mask& mask) {
  if (!is_binary(mask)) fail(ErrorKind::kValidation, "one_hot expects a binary single-channel mask");
  ImageF out(mask.height, mask.width, 2);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    out.data[2 * i] = mask.data[i] ? 0.0f : 1.0f;
    out.data[2 * i + 1] = mask.data[i] ? 1.0f : 0.0f;
  }
  return out;
}

ProcessedSample prepare_sample(const data::RawSample& raw, int side) {
  const data::RawSample resized = resize_pair(raw, side);
  ProcessedSample out;
  out.id = resized.id;
  out.image = normalize(resized.image);
  out.mask = resized.mask;
  out.onehot = one_hot(resized.mask);
  return out;
}

AugmentDraw draw_augment(const AugmentPolicy& policy, Rng& rng) {
  // Always four draws, so one sample's randomness never shifts the next one.
  AugmentDraw draw;
  draw.hflip = rng.bernoulli(policy.p_hflip);
  draw.vflip = rng.bernoulli(policy.p_vflip);
  const double u_angle = rng.uniform();
  const double u_scale = rng.uniform();
  draw.angle_degrees = policy.rot_degrees == 0.0 ? 0.0 : policy.rot_degrees * (2.0 * u_angle - 1.0);
  draw.scale = policy.scale_min == policy.scale_max ? policy.scale_min
                                                    : policy.scale_min + (policy.scale_max - policy.scale_min) * u_scale;
  return draw;
}

ProcessedSample augment(const ProcessedSample& sample, const AugmentDraw& draw) {
  if (draw.is_identity()) return sample;

  ProcessedSample out;
  out.id = sample.id;
  out.image = flip(sample.image, draw.hflip, draw.vflip);
  out.mask = flip(sample.mask, draw.hflip, draw.vflip);

  if (draw.angle_degrees != 0.0 || draw.scale != 1.0) {
    const int h = out.image.height, w = out.image.width;
    const cv::Point2f centre(static_cast<float>(w - 1) / 2.0f, static_cast<float>(h - 1) / 2.0f);
    const cv::Mat affine = cv::getRotationMatrix2D(centre, draw.angle_degrees, draw.scale);
    cv::Mat warped_image, warped_mask;
    cv::warpAffine(view_of(out.image), warped_image, affine, cv::Size(w, h), cv::INTER_CUBIC, cv::BORDER_REPLICATE);
    cv::warpAffine(view_of(out.mask), warped_mask, affine, cv::Size(w, h), cv::INTER_NEAREST, cv::BORDER_CONSTANT,
                   cv::Scalar(0));
    out.image = from_mat<float>(warped_image);
    for (float& v : out.image.data) v = std::clamp(v, 0.0f, 1.0f);  // bicubic overshoot
    out.mask = from_mat<std::uint8_t>(warped_mask);
    for (auto& v : out.mask.data) v = v ? 1 : 0;
  }
  out.onehot = one_hot(out.mask);
  return out;
}

ProcessedSample augment(const ProcessedSample& sample, const AugmentPolicy& policy, Rng& rng) {
  return augment(sample, draw_augment(policy, rng));
}

Tensor<float> stack_images(std::span<const ProcessedSample> samples) {
  if (samples.empty()) fail(ErrorKind::kPrecondition, "cannot stack an empty batch");
  const auto& first = samples.front().image;
  Tensor<float> out(static_cast<int>(samples.size()), first.channels, first.height, first.width);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& img = samples[n].image;
    if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
      fail(ErrorKind::kShape, "batch images differ in size");
    }
    for (int c = 0; c < img.channels; ++c) {
      float* dst = out.channel(static_cast<int>(n), c);
      for (std::size_t p = 0; p < img.pixels(); ++p) dst[p] = img.data[p * img.channels + c];
    }
  }
  return out;
}

Tensor<float> stack_onehot(std::span<const ProcessedSample> samples) {
  if (samples.empty()) fail(ErrorKind::kPrecondition, "cannot stack an empty batch");
  const auto& first = samples.front().onehot;
  Tensor<float> out(static_cast<int>(samples.size()), 2, first.height, first.width);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& oh = samples[n].onehot;
    if (oh.height != first.height || oh.width != first.width) fail(ErrorKind::kShape, "batch masks differ in size");
    for (int c = 0; c < 2; ++c) {
      float* dst = out.channel(static_cast<int>(n), c);
      for (std::size_t p = 0; p < oh.pixels(); ++p) dst[p] = oh.data[p * 2 + c];
    }
  }
  return out;
}

}  // namespace polypseg::preprocess
