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

#include "polypseg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "polypseg/error.hpp"
#include "polypseg/metrics.hpp"

namespace polypseg::report {
namespace {

std::string fixed(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(ErrorKind::kIo, "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

ImageU8 gray_to_rgb(const ImageU8& gray) {
  ImageU8 out(gray.height, gray.width, 3);
  for (std::size_t p = 0; p < gray.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) out.data[3 * p + c] = gray.data[p];
  }
  return out;
}

// Prediction drawn as a translucent green layer over the image.
ImageU8 mask_overlay(const ImageU8& image, const Mask& mask) {
  ImageU8 out = image;
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    if (!mask.data[p]) continue;
    out.data[3 * p + 0] = static_cast<std::uint8_t>(std::lround(0.6 * image.data[3 * p + 0]));
    out.data[3 * p + 1] = static_cast<std::uint8_t>(std::lround(0.6 * image.data[3 * p + 1] + 0.4 * 255.0));
    out.data[3 * p + 2] = static_cast<std::uint8_t>(std::lround(0.6 * image.data[3 * p + 2]));
  }
  return out;
}

}  // namespace

MaskPredictor model_predictor(const model::UNet<float>& model) {
  return [&model](const preprocess::ProcessedSample& sample) {
    const auto prediction = model.forward(preprocess::stack_images(std::span(&sample, 1)));
    return metrics::binarize_prediction(prediction.probs, 0);
  };
}

TestReport evaluate(const MaskPredictor& predictor, std::span<const std::string> test_ids, SampleStore& store) {
  if (test_ids.empty()) fail(ErrorKind::kPrecondition, "test split is empty");
  TestReport report;
  double iou_sum = 0.0, f_sum = 0.0;
  for (const auto& id : test_ids) {
    preprocess::ProcessedSample sample;
    try {
      sample = store.get(id);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kIo) throw;
      fail(ErrorKind::kIo, "sample " + id + ": " + e.what());
    }
    const Mask pred = predictor(sample);
    const auto c = metrics::confusion(pred, sample.mask);
    ImageScore score{id, metrics::iou(c), metrics::dice_f(c)};
    iou_sum += score.iou;
    f_sum += score.f_dice;
    report.per_image.push_back(std::move(score));
  }
  report.n = report.per_image.size();
  report.mean_iou = iou_sum / static_cast<double>(report.n);
  report.mean_f = f_sum / static_cast<double>(report.n);
  return report;
}

TestReport evaluate(const model::UNet<float>& model, std::span<const std::string> test_ids, SampleStore& store) {
  TestReport report = evaluate(model_predictor(model), test_ids, store);
  report.model_params = model::count_params(model);
  const auto flops = model::count_flops(model.config(), store.side(), store.side());
  report.model_flops = flops.flops;
  report.model_macs = flops.macs;
  return report;
}

ImageU8 compose_panel(const PanelInput& input) {
  const int h = input.image.height, w = input.image.width;
  if (input.image.channels != 3) fail(ErrorKind::kValidation, "panel image must be RGB");
  if (!input.truth.same_extent(h, w) || !input.prediction.same_extent(h, w)) {
    fail(ErrorKind::kValidation, "panel inputs for " + input.id + " differ in size");
  }
  std::vector<ImageU8> tiles;
  tiles.push_back(input.image);
  tiles.push_back(gray_to_rgb(mask_to_gray(input.truth)));
  tiles.push_back(gray_to_rgb(mask_to_gray(input.prediction)));
  tiles.push_back(mask_overlay(input.image, input.prediction));
  if (input.heatmap) tiles.push_back(explain::overlay(input.image, *input.heatmap, 0.5).rgb);

  ImageU8 panel(h, w * static_cast<int>(tiles.size()), 3);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(&tiles[t].at(y, 0), static_cast<std::size_t>(w) * 3, &panel.at(y, static_cast<int>(t) * w));
    }
  }
  return panel;
}

std::vector<std::filesystem::path> render_panels(std::span<const PanelInput> inputs,
                                                 const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& input : inputs) {
    const auto path = out_dir / (input.id + ".png");
    write_image(path, compose_panel(input));
    written.push_back(path);
  }
  return written;
}

std::vector<std::size_t> selected_epoch_rows(std::span<const train::EpochLog> logs) {
  std::set<std::size_t> rows;
  if (logs.empty()) return {};
  for (int target : {0, 10, 20, 30, 40}) {
    for (std::size_t i = 0; i < logs.size(); ++i) {
      if (logs[i].epoch == target) rows.insert(i);
    }
  }
  rows.insert(logs.size() - 1);
  return {rows.begin(), rows.end()};
}

void write_test_report_csv(const std::filesystem::path& path, const TestReport& report) {
  std::ostringstream out;
  out << "id,iou,f_dice\n";
  for (const auto& s : report.per_image) out << s.id << "," << fixed(s.iou, 8) << "," << fixed(s.f_dice, 8) << "\n";
  write_text(path, out.str());
}

std::string format_summary(const TestReport& report) {
  std::ostringstream out;
  out << "n_test: " << report.n << "\n";
  out << "mean_iou: " << fixed(report.mean_iou, 6) << "\n";
  out << "mean_f: " << fixed(report.mean_f, 6) << "\n";
  out << "model_params: " << report.model_params << "\n";
  out << "model_macs: " << report.model_macs << "\n";
  out << "model_flops: " << report.model_flops << "\n";
  out << "model_gmacs: " << fixed(static_cast<double>(report.model_macs) / 1e9, 3) << "\n";
  out << "model_gflops: " << fixed(static_cast<double>(report.model_flops) / 1e9, 3) << "\n";
  out << "reference_params: " << kReferenceParams << "\n";
  out << "reference_gflops: " << fixed(kReferenceGflops, 3) << "\n";
  return out.str();
}

std::vector<std::filesystem::path> export_tables(std::span<const train::EpochLog> logs, const TestReport& report,
                                                 const std::filesystem::path& out_dir) {
  if (logs.empty()) fail(ErrorKind::kPrecondition, "export_tables needs at least one epoch");
  ensure_dir(out_dir);
  std::vector<std::filesystem::path> written;

  std::string all = std::string(train::kEpochCsvHeader) + "\n";
  for (const auto& log : logs) all += train::format_epoch_csv(log) + "\n";
  written.push_back(out_dir / "epoch_log.csv");
  write_text(written.back(), all);

  std::string selected = std::string(train::kEpochCsvHeader) + "\n";
  for (std::size_t i : selected_epoch_rows(logs)) selected += train::format_epoch_csv(logs[i]) + "\n";
  written.push_back(out_dir / "selected_epochs.csv");
  write_text(written.back(), selected);

  written.push_back(out_dir / "test_report.csv");
  write_test_report_csv(written.back(), report);

  written.push_back(out_dir / "summary.txt");
  write_text(written.back(), format_summary(report));
  return written;
}

}  // namespace polypseg::report
