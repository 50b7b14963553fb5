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

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "polypseg/checkpoint.hpp"
#include "polypseg/dataset.hpp"
#include "polypseg/gradcam.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/preprocess.hpp"
#include "polypseg/report.hpp"
#include "polypseg/run_config.hpp"
#include "polypseg/sample_store.hpp"
#include "polypseg/trainer.hpp"

namespace polypseg::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
};

struct SynthFlags {
  std::size_t count = 16;
  int size = 128;
  std::uint64_t seed = 0;
  std::string out;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Config file, then POLYPSEG_OUT, then --set overrides.
RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig config = flags.config_path.empty() ? RunConfig{} : load_run_config(flags.config_path);
  if (const char* env = std::getenv("POLYPSEG_OUT"); env && *env) config.output_dir = env;
  for (const auto& assignment : flags.overrides) apply_override(config, assignment);
  return config;
}

void write_run_meta(const fs::path& dir, const std::string& command, const RunConfig* config, json extra = {}) {
  ensure_dir(dir);
  json meta;
  meta["command"] = command;
  meta["version"] = std::string(kVersion);
  meta["created_utc"] = utc_now();
  if (config) {
    meta["config_hash"] = config_hash(*config);
    meta["seeds"] = {{"split", config->split_seed},
                     {"model", config->model.seed},
                     {"train", config->train.seed},
                     {"augment", config->train.augment.seed}};
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  write_text(dir / ("run_meta." + command + ".json"), meta.dump(2) + "\n");
}

void require_dataset_root(const RunConfig& config) {
  if (config.dataset_root.empty()) fail(ErrorKind::kConfig, "dataset.root is not set");
}

/// Uses <out>/split.txt when present (checked against the manifest),
/// otherwise computes and writes it.
data::SplitTriple load_or_make_split(const RunConfig& config, const data::DatasetManifest& manifest,
                                     std::ostream& out) {
  const fs::path split_path = config.output_dir / "split.txt";
  if (fs::exists(split_path)) {
    auto split = data::read_split_file(split_path);
    if (split.manifest_checksum != manifest.checksum) {
      fail(ErrorKind::kValidation, "split file " + split_path.string() + " was made for a different manifest");
    }
    return split;
  }
  auto split = data::split_manifest(manifest, config.split_seed);
  ensure_dir(config.output_dir);
  data::write_split_file(split_path, split);
  for (const auto& w : split.warnings) out << "warning: " << w << "\n";
  return split;
}

int cmd_synth(const SynthFlags& flags, std::ostream& out) {
  if (flags.out.empty()) fail(ErrorKind::kConfig, "synth needs --out");
  data::SyntheticOptions options;
  options.count = flags.count;
  options.size = flags.size;
  options.seed = flags.seed;
  const auto manifest = data::generate_synthetic(options, flags.out);
  write_run_meta(flags.out, "synth", nullptr,
                 {{"seeds", {{"synth", flags.seed}}},
                  {"count", flags.count},
                  {"size", flags.size},
                  {"manifest_checksum", manifest.checksum}});
  out << "synth: wrote " << manifest.size() << " samples to " << flags.out << "\n";
  return kExitOk;
}

int cmd_prepare(const RunConfig& config, std::ostream& out) {
  require_dataset_root(config);
  const auto manifest = data::scan_dataset(config.dataset_root);
  const auto split = data::split_manifest(manifest, config.split_seed);
  ensure_dir(config.output_dir);

  std::string listing = "# checksum " + manifest.checksum + "\n# root " + manifest.root.generic_string() + "\n";
  for (const auto& e : manifest.entries) {
    listing += e.id + "\t" + e.image_path.generic_string() + "\t" + e.mask_path.generic_string() + "\n";
  }
  write_text(config.output_dir / "manifest.tsv", listing);
  data::write_split_file(config.output_dir / "split.txt", split);
  write_text(config.output_dir / "config.json", serialize_run_config(config));
  write_run_meta(config.output_dir, "prepare", &config, {{"manifest_checksum", manifest.checksum}});

  for (const auto& w : split.warnings) out << "warning: " << w << "\n";
  out << "prepare: " << manifest.size() << " samples -> train " << split.train.size() << ", val "
      << split.val.size() << ", test " << split.test.size() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  require_dataset_root(config);
  const auto manifest = data::scan_dataset(config.dataset_root);
  const auto split = load_or_make_split(config, manifest, out);
  if (split.train.empty()) fail(ErrorKind::kPrecondition, "training split is empty");

  ensure_dir(config.output_dir);
  for (const char* stale : {"epoch_log.csv", "epoch_log.jsonl"}) fs::remove(config.output_dir / stale);
  write_text(config.output_dir / "config.json", serialize_run_config(config));
  write_run_meta(config.output_dir, "train", &config, {{"manifest_checksum", manifest.checksum}});

  SampleStore store(manifest, config.side);
  train::TrainOptions options;
  options.out_dir = config.output_dir;
  options.on_epoch = [&out](const train::EpochLog& log) {
    out << "epoch " << log.epoch << "  train_loss " << log.train_loss << "  train_iou " << log.train.iou
        << "  val_iou " << (log.val.n_images ? std::to_string(log.val.iou) : std::string("n/a")) << "  ("
        << log.seconds << " s)\n"
        << std::flush;
  };
  auto result = train::train(model::UNet<float>(config.model), split, store, config.train, options);
  out << "train: " << result.logs.size() << " epochs, stop reason: " << result.stop_reason << ", best epoch "
      << result.state.best_epoch << "\n";
  return kExitOk;
}

fs::path checkpoint_path(const RunConfig& config, const std::string& flag) {
  return flag.empty() ? config.output_dir / "best.ckpt" : fs::path(flag);
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint_flag, std::ostream& out) {
  require_dataset_root(config);
  const auto loaded = train::load_checkpoint(checkpoint_path(config, checkpoint_flag));
  const auto manifest = data::scan_dataset(config.dataset_root);
  const auto split = load_or_make_split(config, manifest, out);
  if (split.test.empty()) fail(ErrorKind::kPrecondition, "test split is empty");

  SampleStore store(manifest, config.side);
  const auto test_report = report::evaluate(loaded.model, split.test, store);
  ensure_dir(config.output_dir);

  const fs::path jsonl = config.output_dir / "epoch_log.jsonl";
  if (fs::exists(jsonl)) {
    const auto logs = train::read_epoch_log(jsonl);
    if (!logs.empty()) {
      report::export_tables(logs, test_report, config.output_dir);
    } else {
      report::write_test_report_csv(config.output_dir / "test_report.csv", test_report);
    }
  } else {
    report::write_test_report_csv(config.output_dir / "test_report.csv", test_report);
    write_text(config.output_dir / "summary.txt", report::format_summary(test_report));
  }
  write_run_meta(config.output_dir, "eval", &config,
                 {{"checkpoint", checkpoint_path(config, checkpoint_flag).generic_string()},
                  {"mean_iou", test_report.mean_iou},
                  {"mean_f", test_report.mean_f}});
  out << report::format_summary(test_report);
  return kExitOk;
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> ids;
  std::stringstream in(text);
  std::string id;
  while (std::getline(in, id, ',')) {
    if (!id.empty()) ids.push_back(id);
  }
  return ids;
}

int cmd_explain(const RunConfig& config, const std::string& checkpoint_flag, const std::string& ids_flag,
                const std::string& tap, std::ostream& out) {
  require_dataset_root(config);
  const auto loaded = train::load_checkpoint(checkpoint_path(config, checkpoint_flag));
  const auto manifest = data::scan_dataset(config.dataset_root);

  std::vector<std::string> ids = split_ids(ids_flag);
  if (ids.empty()) {
    const auto split = load_or_make_split(config, manifest, out);
    const auto& pool = split.test.empty() ? split.train : split.test;
    ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, pool.size())));
  }

  SampleStore store(manifest, config.side);
  const fs::path cam_dir = config.output_dir / "cam";
  const fs::path overlay_dir = config.output_dir / "overlay";
  ensure_dir(cam_dir);
  ensure_dir(overlay_dir);

  std::vector<report::PanelInput> panels;
  for (const auto& id : ids) {
    const auto sample = store.get(id);
    const auto input = preprocess::stack_images(std::span(&sample, 1));
    const auto prediction = loaded.model.forward(input);
    auto heatmap = explain::gradcam(loaded.model, input, tap);

    const auto& raw = store.raw(id);
    const auto overlaid = explain::overlay(raw.image, heatmap);
    write_image(cam_dir / (id + ".png"), explain::heatmap_to_gray(heatmap));
    write_image(overlay_dir / (id + ".png"), overlaid.rgb);

    report::PanelInput panel;
    panel.id = id;
    panel.image = raw.image;
    panel.truth = raw.mask;
    panel.prediction = metrics::binarize_prediction(prediction.probs, 0);
    out << "explain: " << id << "  tap " << heatmap.source_tap;
    if (std::find(raw.mask.data.begin(), raw.mask.data.end(), 1) != raw.mask.data.end()) {
      out << "  coverage " << explain::attention_coverage(heatmap, raw.mask).value;
    }
    out << "\n";
    panel.heatmap = std::move(heatmap);
    panels.push_back(std::move(panel));
  }
  report::render_panels(panels, config.output_dir / "panels");
  json id_list = ids;
  write_run_meta(config.output_dir, "explain", &config,
                 {{"checkpoint", checkpoint_path(config, checkpoint_flag).generic_string()}, {"ids", id_list}});
  return kExitOk;
}

int report_error(std::ostream& err, ErrorKind kind, const std::string& message) {
  const int code = exit_code(kind);
  std::string line = message;
  for (auto& c : line) {
    if (c == '\n') c = ' ';
  }
  err << "error class=" << to_string(kind) << " code=" << code << ": " << line << "\n";
  return code;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kStructural:
    case ErrorKind::kValidation: return kExitData;
    case ErrorKind::kIo:
    case ErrorKind::kIntegrity: return kExitIo;
    case ErrorKind::kShape:
    case ErrorKind::kLookup:
    case ErrorKind::kCapability:
    case ErrorKind::kNumeric:
    case ErrorKind::kPrecondition: return kExitRuntime;
  }
  return kExitRuntime;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Polyp segmentation with U-Net and Grad-CAM", "polypseg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "Write a synthetic image/mask dataset");
  synth->add_option("-n,--count", synth_flags.count, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_flags.size, "Image side in pixels");
  synth->add_option("--seed", synth_flags.seed, "Generator seed");
  synth->add_option("--out", synth_flags.out, "Output dataset root")->required();

  CommonFlags common;
  std::string checkpoint;
  std::string ids;
  std::string tap;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--set", common.overrides, "Override a config key (key=value), repeatable")
        ->take_all()
        ->allow_extra_args(false);
  };
  auto* prepare = app.add_subcommand("prepare", "Scan the dataset and write the split");
  add_common(prepare);
  auto* train_cmd = app.add_subcommand("train", "Train a U-Net");
  add_common(train_cmd);
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the test split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <output.dir>/best.ckpt)");
  auto* explain_cmd = app.add_subcommand("explain", "Grad-CAM heatmaps, overlays and panels");
  add_common(explain_cmd);
  explain_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (default <output.dir>/best.ckpt)");
  explain_cmd->add_option("--ids", ids, "Comma-separated sample ids (default: first test ids)");
  explain_cmd->add_option("--tap", tap, "Activation tap (default: last decoder block)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, ErrorKind::kConfig, e.what());
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_flags, out);
    const RunConfig config = resolve_config(common);
    if (prepare->parsed()) return cmd_prepare(config, out);
    if (train_cmd->parsed()) return cmd_train(config, out);
    if (eval->parsed()) return cmd_eval(config, checkpoint, out);
    return cmd_explain(config, checkpoint, ids, tap, out);
  } catch (const Error& e) {
    return report_error(err, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, ErrorKind::kIo, e.what());
  } catch (const std::exception& e) {
    return report_error(err, ErrorKind::kNumeric, e.what());
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace polypseg::cli
