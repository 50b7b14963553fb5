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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polypseg/gradcam.hpp"
#include "polypseg/preprocess.hpp"
#include "polypseg/sample_store.hpp"
#include "polypseg/trainer.hpp"
#include "polypseg/unet.hpp"

namespace polypseg::report {

struct ImageScore {
  std::string id;
  double iou = 0.0;
  double f_dice = 0.0;
};

struct TestReport {
  std::vector<ImageScore> per_image;
  double mean_iou = 0.0;
  double mean_f = 0.0;
  std::size_t n = 0;
  std::uint64_t model_params = 0;
  std::uint64_t model_flops = 0;
  std::uint64_t model_macs = 0;
};

/// Maps a preprocessed sample to a binary mask.
using MaskPredictor = std::function<Mask(const preprocess::ProcessedSample&)>;

MaskPredictor model_predictor(const model::UNet<float>& model);

/// Per-image thresholded IoU / Dice-F and their arithmetic means. Throws
/// kPrecondition for an empty id list; missing files surface as kIo.
TestReport evaluate(const MaskPredictor& predictor, std::span<const std::string> test_ids, SampleStore& store);
TestReport evaluate(const model::UNet<float>& model, std::span<const std::string> test_ids, SampleStore& store);

struct PanelInput {
  std::string id;
  ImageU8 image;  // RGB at prediction resolution
  Mask truth;
  Mask prediction;
  std::optional<explain::Heatmap> heatmap;
};

/// Tiles, left to right: original | ground truth | prediction | prediction
/// overlay | Grad-CAM overlay (only when a heatmap is present).
ImageU8 compose_panel(const PanelInput& input);

/// Writes `<out_dir>/<id>.png` per input and returns the paths.
std::vector<std::filesystem::path> render_panels(std::span<const PanelInput> inputs,
                                                 const std::filesystem::path& out_dir);

/// Epochs shown in the condensed table: 0, 10, 20, 30, 40 and the last one,
/// restricted to epochs present in the log.
std::vector<std::size_t> selected_epoch_rows(std::span<const train::EpochLog> logs);

/// Writes epoch_log.csv, selected_epochs.csv, test_report.csv and summary.txt.
std::vector<std::filesystem::path> export_tables(std::span<const train::EpochLog> logs, const TestReport& report,
                                                 const std::filesystem::path& out_dir);

void write_test_report_csv(const std::filesystem::path& path, const TestReport& report);
std::string format_summary(const TestReport& report);

/// Reference figures for the canonical model, printed beside our own counts.
inline constexpr std::uint64_t kReferenceParams = 32'521'250;
inline constexpr double kReferenceGflops = 50.902;

}  // namespace polypseg::report
