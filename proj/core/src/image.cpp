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

#include "polypseg/image.hpp"

#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "polypseg/error.hpp"

namespace polypseg {

Mask make_mask(int height, int width) { return Mask(height, width, 1, 0); }

bool is_binary(const Mask& mask) {
  return mask.channels == 1 && std::all_of(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v <= 1; });
}

ImageU8 read_image(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::kIo, "cannot open image file: " + path.string());
  const int flag = channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
  cv::Mat decoded;
  try {
    decoded = cv::imread(path.string(), flag);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::kIo, "cannot decode image file: " + path.string() + " (" + e.what() + ")");
  }
  if (decoded.empty()) fail(ErrorKind::kIo, "cannot decode image file: " + path.string());
  if (channels == 3) cv::cvtColor(decoded, decoded, cv::COLOR_BGR2RGB);

  ImageU8 out(decoded.rows, decoded.cols, channels);
  const std::size_t row_bytes = static_cast<std::size_t>(decoded.cols) * channels;
  for (int y = 0; y < decoded.rows; ++y) std::copy_n(decoded.ptr<std::uint8_t>(y), row_bytes, &out.at(y, 0));
  return out;
}

void write_image(const std::filesystem::path& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) fail(ErrorKind::kValidation, "write_image expects 1 or 3 channels");
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat view(image.height, image.width, type, const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat bgr;
  if (image.channels == 3) {
    cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
  } else {
    bgr = view;
  }
  std::vector<int> params;
  if (path.extension() == ".png") params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, params);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::kIo, "cannot write image file: " + path.string() + " (" + e.what() + ")");
  }
  if (!ok) fail(ErrorKind::kIo, "cannot write image file: " + path.string());
}

ImageU8 mask_to_gray(const Mask& mask) {
  ImageU8 out(mask.height, mask.width, 1);
  std::transform(mask.data.begin(), mask.data.end(), out.data.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  return out;
}

}  // namespace polypseg
