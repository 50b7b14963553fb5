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
#include <filesystem>
#include <vector>

namespace polypseg {

/// Dense interleaved (row, column, channel) image with value semantics.
template <typename T>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }
  bool same_extent(int h, int w) const { return height == h && width == w; }

  T& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

/// Single-channel binary mask with values in {0, 1}.
using Mask = Image<std::uint8_t>;

Mask make_mask(int height, int width);
bool is_binary(const Mask& mask);

/// Reads an 8-bit image from disk; `channels` is 1 (grayscale) or 3 (RGB).
/// Throws Error{kIo} naming the path when the file cannot be decoded.
ImageU8 read_image(const std::filesystem::path& path, int channels);

/// Writes an 8-bit 1- or 3-channel (RGB order) image. The encoder is picked
/// from the extension; PNG output is deterministic.
void write_image(const std::filesystem::path& path, const ImageU8& image);

/// Scales a {0,1} mask to {0,255} for display or storage.
ImageU8 mask_to_gray(const Mask& mask);

}  // namespace polypseg
