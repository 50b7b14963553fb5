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

#include "polypseg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "polypseg/error.hpp"
#include "polypseg/layers.hpp"
#include "polypseg/rng.hpp"

namespace polypseg::train {
namespace {

std::string fmt_double(double v, int precision = 6) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

bool stop_metric_maximizes(StopMetric m) { return m != StopMetric::kValLoss; }

double pick_metric(StopMetric m, const metrics::MetricRecord& record, double loss) {
  switch (m) {
    case StopMetric::kValIou: return record.iou;
    case StopMetric::kValDice: return record.f_dice;
    case StopMetric::kValLoss: return loss;
  }
  return record.iou;
}

struct BatchOutcome {
  double loss = 0.0;
  Tensor<float> probs;
};

}  // namespace

std::string_view to_string(StopMetric metric) {
  switch (metric) {
    case StopMetric::kValIou: return "val_iou";
    case StopMetric::kValDice: return "val_dice";
    case StopMetric::kValLoss: return "val_loss";
  }
  return "val_iou";
}

StopMetric parse_stop_metric(std::string_view text) {
  if (text == "val_iou") return StopMetric::kValIou;
  if (text == "val_dice") return StopMetric::kValDice;
  if (text == "val_loss") return StopMetric::kValLoss;
  fail(ErrorKind::kConfig, "unknown early_stop_metric '" + std::string(text) + "' (val_iou, val_dice, val_loss)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorKind::kConfig, "train.lr must be > 0");
  if (max_epochs < 1) fail(ErrorKind::kConfig, "train.max_epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::kConfig, "train.batch_size must be >= 1");
  if (early_stop_patience < 1) {
    fail(ErrorKind::kConfig, "train.early_stop_patience must be >= 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorKind::kConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0) || !(dice_eps > 0.0)) fail(ErrorKind::kConfig, "epsilon values must be > 0");
  augment.validate();
}

std::string format_epoch_csv(const EpochLog& log) {
  return std::to_string(log.epoch) + "," + fmt_double(log.train.iou) + "," + fmt_double(log.train.f_dice) + "," +
         fmt_double(log.train_loss) + "," + (log.val.n_images ? fmt_double(log.val.iou) : "nan") + "," +
         (log.val.n_images ? fmt_double(log.val.f_dice) : "nan") + "," +
         (log.val.n_images ? fmt_double(log.val_loss) : "nan") + "," + fmt_double(log.seconds, 3);
}

std::string format_epoch_json(const EpochLog& log) {
  const auto record = [](const metrics::MetricRecord& r, double loss) {
    if (r.n_images == 0) return std::string("null");
    return "{\"iou\":" + fmt_double(r.iou, 8) + ",\"f\":" + fmt_double(r.f_dice, 8) + ",\"loss\":" +
           fmt_double(loss, 8) + ",\"n\":" + std::to_string(r.n_images) + "}";
  };
  return "{\"epoch\":" + std::to_string(log.epoch) + ",\"train\":" + record(log.train, log.train_loss) +
         ",\"val\":" + record(log.val, log.val_loss) + ",\"seconds\":" + fmt_double(log.seconds, 3) + "}";
}

EpochLog parse_epoch_json(std::string_view line) {
  EpochLog log;
  try {
    const auto j = nlohmann::json::parse(line);
    log.epoch = j.at("epoch").get<int>();
    log.seconds = j.at("seconds").get<double>();
    const auto record = [&j](const char* key, metrics::MetricRecord& r, double& loss) {
      const auto& node = j.at(key);
      r.scope = metrics::MetricScope::kEpochMean;
      if (node.is_null()) return;
      r.iou = node.at("iou").get<double>();
      r.f_dice = node.at("f").get<double>();
      r.n_images = node.at("n").get<std::size_t>();
      loss = node.at("loss").get<double>();
    };
    record("train", log.train, log.train_loss);
    record("val", log.val, log.val_loss);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIntegrity, std::string("bad epoch log line: ") + e.what());
  }
  return log;
}

std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read epoch log: " + path.string());
  std::vector<EpochLog> logs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) logs.push_back(parse_epoch_json(line));
  }
  return logs;
}

// ---------------------------------------------------------------------------

EarlyStopping::EarlyStopping(int patience, bool maximize)
    : patience_(patience), maximize_(maximize), best_(std::nan("")) {}

bool EarlyStopping::update(int epoch, double value) {
  const bool improved =
      best_epoch_ < 0 || std::isnan(best_) || (maximize_ ? value > best_ : value < best_);
  if (improved && std::isfinite(value)) {
    best_ = value;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void EarlyStopping::restore(double best, int best_epoch, int since_best) {
  best_ = best;
  best_epoch_ = best_epoch;
  since_best_ = since_best;
}

int stopping_epoch(std::span<const double> metric, int patience, bool maximize) {
  EarlyStopping stopper(patience, maximize);
  for (std::size_t i = 0; i < metric.size(); ++i) {
    stopper.update(static_cast<int>(i), metric[i]);
    if (stopper.should_stop()) return static_cast<int>(i);
  }
  return static_cast<int>(metric.size()) - 1;
}

// ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<model::Parameter<float>>& params, const std::vector<Tensor<float>>& grads) {
  if (grads.size() != params.size()) fail(ErrorKind::kShape, "gradient list does not match parameters");
  if (m_.empty()) {
    for (const auto& p : params) {
      const auto& s = p.value.shape();
      m_.emplace_back(s[0], s[1], s[2], s[3]);
      v_.emplace_back(s[0], s[1], s[2], s[3]);
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step_size = static_cast<float>(lr_ / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].value.data();
    const float* g = grads[i].data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t k = 0; k < params[i].value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

void Adam::save(TrainingState& state) const {
  state.optimizer_step = step_;
  state.adam_m = m_;
  state.adam_v = v_;
}

void Adam::restore(const TrainingState& state) {
  step_ = state.optimizer_step;
  m_ = state.adam_m;
  v_ = state.adam_v;
}

// ---------------------------------------------------------------------------

SplitScore score_split(const model::UNet<float>& model, std::span<const std::string> ids, SampleStore& store,
                       int batch_size, const TrainConfig& config) {
  SplitScore score;
  metrics::MetricAccumulator acc;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(ids.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<preprocess::ProcessedSample> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(store.get(ids[i]));
    const auto prediction = model.forward(preprocess::stack_images(batch));
    const auto target = preprocess::stack_onehot(batch);
    loss_sum += metrics::soft_dice_loss(prediction.probs, target, config.dice_eps, config.dice_mode).value *
                static_cast<double>(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
      acc.add(metrics::binarize_prediction(prediction.probs, static_cast<int>(n)), batch[n].mask);
    }
  }
  score.record = acc.mean(metrics::MetricScope::kSplitMean);
  score.loss = ids.empty() ? 0.0 : loss_sum / static_cast<double>(ids.size());
  return score;
}

TrainResult train(model::UNet<float> model, const data::SplitTriple& splits, SampleStore& store,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (splits.train.empty()) fail(ErrorKind::kPrecondition, "training split is empty");

  const bool maximize = stop_metric_maximizes(config.early_stop_metric);
  EarlyStopping stopper(config.early_stop_patience, maximize);
  Adam adam(config.lr, config.beta1, config.beta2, config.adam_eps);
  TrainingState state;
  int start_epoch = 0;
  if (options.resume) {
    state = *options.resume;
    adam.restore(state);
    stopper.restore(state.best_metric, state.best_epoch, state.epochs_since_improvement);
    start_epoch = state.epoch + 1;
  }

  std::ofstream csv, jsonl;
  if (options.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*options.out_dir, ec);
    const auto csv_path = *options.out_dir / "epoch_log.csv";
    const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    csv.open(csv_path, std::ios::app);
    jsonl.open(*options.out_dir / "epoch_log.jsonl", std::ios::app);
    if (!csv || !jsonl) fail(ErrorKind::kIo, "cannot open epoch logs under " + options.out_dir->string());
    if (fresh) csv << kEpochCsvHeader << "\n";
  }

  TrainResult result{model, model, {}, {}, "max_epochs"};
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  bool budget_exhausted = false;

  for (int epoch = start_epoch; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> order = splits.train;
    Rng order_rng(derive_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(std::span<std::string>(order));
    Rng augment_rng(derive_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch) + 1));

    metrics::MetricAccumulator train_acc;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size() && !budget_exhausted; start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<preprocess::ProcessedSample> batch;
      for (std::size_t i = start; i < end; ++i) {
        auto sample = store.get(order[i]);
        if (config.augmentation) {
          if (options.on_augment) options.on_augment(order[i]);
          sample = preprocess::augment(sample, config.augment, augment_rng);
        }
        batch.push_back(std::move(sample));
      }

      const auto input = preprocess::stack_images(batch);
      const auto target = preprocess::stack_onehot(batch);
      auto capture = model.forward_with_taps(input);
      const auto& probs = capture.prediction().probs;
      Tensor<float> grad_probs, grad_logits;
      const double loss =
          metrics::soft_dice_loss(probs, target, config.dice_eps, config.dice_mode, &grad_probs).value;
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(start / batch_size));
      }
      nn::softmax_channels_backward(probs, grad_probs, grad_logits);
      auto grads = model.zero_gradients();
      capture.backward(grad_logits, &grads, std::nullopt, false);
      adam.step(model.parameters(), grads);

      loss_sum += loss * static_cast<double>(batch.size());
      for (std::size_t n = 0; n < batch.size(); ++n) {
        train_acc.add(metrics::binarize_prediction(probs, static_cast<int>(n)), batch[n].mask);
      }
      if (options.max_steps != 0 && adam.steps() >= options.max_steps) budget_exhausted = true;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train = train_acc.mean(metrics::MetricScope::kEpochMean);
    log.train_loss = train_acc.count() ? loss_sum / static_cast<double>(train_acc.count()) : 0.0;
    double monitored;
    if (!splits.val.empty()) {
      const SplitScore val = score_split(model, splits.val, store, config.batch_size, config);
      log.val = val.record;
      log.val.scope = metrics::MetricScope::kEpochMean;
      log.val_loss = val.loss;
      monitored = pick_metric(config.early_stop_metric, log.val, log.val_loss);
    } else {
      monitored = pick_metric(config.early_stop_metric, log.train, log.train_loss);
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool improved = stopper.update(epoch, monitored);
    state.epoch = epoch;
    state.best_metric = stopper.best_value();
    state.best_epoch = stopper.best_epoch();
    state.epochs_since_improvement = stopper.epochs_since_improvement();
    adam.save(state);
    if (improved) result.best_model = model;

    if (options.out_dir) {
      csv << format_epoch_csv(log) << "\n" << std::flush;
      jsonl << format_epoch_json(log) << "\n" << std::flush;
      save_checkpoint(*options.out_dir / "last.ckpt", model, state);
      if (improved) save_checkpoint(*options.out_dir / "best.ckpt", model, state);
    }
    result.logs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);

    if (stopper.should_stop()) {
      result.stop_reason = "early_stopping";
      break;
    }
    if (budget_exhausted) {
      result.stop_reason = "step_budget";
      break;
    }
  }

  result.final_model = std::move(model);
  result.state = std::move(state);
  return result;
}

}  // namespace polypseg::train
