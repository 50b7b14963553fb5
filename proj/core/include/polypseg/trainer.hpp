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
#include <string_view>
#include <vector>

#include "polypseg/checkpoint.hpp"
#include "polypseg/dataset.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/preprocess.hpp"
#include "polypseg/sample_store.hpp"
#include "polypseg/unet.hpp"

namespace polypseg::train {

enum class StopMetric { kValIou, kValDice, kValLoss };
std::string_view to_string(StopMetric metric);
StopMetric parse_stop_metric(std::string_view text);

struct TrainConfig {
  double lr = 1e-4;
  int max_epochs = 50;
  int batch_size = 8;
  int early_stop_patience = 10;
  StopMetric early_stop_metric = StopMetric::kValIou;
  std::uint64_t seed = 0;
  preprocess::AugmentPolicy augment;
  bool augmentation = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dice_eps = metrics::kDefaultDiceEps;
  metrics::DiceMode dice_mode = metrics::DiceMode::kForeground;

  /// Throws Error{kConfig}.
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  metrics::MetricRecord train;
  double train_loss = 0.0;
  metrics::MetricRecord val;
  double val_loss = 0.0;
  double seconds = 0.0;
};

inline constexpr std::string_view kEpochCsvHeader =
    "epoch,train_iou,train_f,train_loss,val_iou,val_f,val_loss,seconds";
std::string format_epoch_csv(const EpochLog& log);
std::string format_epoch_json(const EpochLog& log);
EpochLog parse_epoch_json(std::string_view line);
/// Reads an epoch_log.jsonl file; kIo when missing, kIntegrity on bad lines.
std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path);

/// Patience-based stopping on a scalar metric.
class EarlyStopping {
 public:
  EarlyStopping(int patience, bool maximize);

  /// Records the metric for `epoch`; returns true when it is a new best.
  bool update(int epoch, double value);
  bool should_stop() const { return since_best_ >= patience_; }

  double best_value() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_improvement() const { return since_best_; }
  void restore(double best, int best_epoch, int since_best);

 private:
  int patience_;
  bool maximize_;
  double best_;
  int best_epoch_ = -1;
  int since_best_ = 0;
};

/// Index of the epoch after which training stops for a metric sequence, or
/// the last index when patience never runs out.
int stopping_epoch(std::span<const double> metric, int patience, bool maximize);

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);

  void step(std::vector<model::Parameter<float>>& params, const std::vector<Tensor<float>>& grads);

  void save(TrainingState& state) const;
  void restore(const TrainingState& state);
  std::uint64_t steps() const { return step_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

struct TrainOptions {
  /// When set, epoch_log.csv / epoch_log.jsonl and last/best checkpoints are
  /// written here.
  std::optional<std::filesystem::path> out_dir;
  /// Continue after the last completed epoch recorded in this state.
  std::optional<TrainingState> resume;
  /// Stop after this many optimizer steps (0 = no limit).
  std::uint64_t max_steps = 0;
  /// Called with the id of every sample sent through augmentation.
  std::function<void(std::string_view)> on_augment;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  model::UNet<float> best_model;
  model::UNet<float> final_model;
  TrainingState state;
  std::vector<EpochLog> logs;
  std::string stop_reason;
};

/// Adam on the soft Dice loss with per-epoch train/val metrics and early
/// stopping. Training samples are reshuffled every epoch and augmented; the
/// validation split is never augmented. When the validation split is empty,
/// the early-stopping metric falls back to the training-split counterpart.
/// Throws Error{kNumeric} when the loss becomes non-finite.
TrainResult train(model::UNet<float> model, const data::SplitTriple& splits, SampleStore& store,
                  const TrainConfig& config, const TrainOptions& options = {});

/// Inference-time metrics on a list of ids (no augmentation).
struct SplitScore {
  metrics::MetricRecord record;
  double loss = 0.0;
};
SplitScore score_split(const model::UNet<float>& model, std::span<const std::string> ids, SampleStore& store,
                       int batch_size, const TrainConfig& config);

}  // namespace polypseg::train
