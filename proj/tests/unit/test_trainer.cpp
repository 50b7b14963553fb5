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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "polypseg/checkpoint.hpp"
#include "polypseg/error.hpp"
#include "polypseg/sample_store.hpp"
#include "polypseg/trainer.hpp"
#include "test_util.hpp"

namespace polypseg {
namespace {

namespace fs = std::filesystem;

model::UNetConfig tiny_model() {
  model::UNetConfig c;
  c.encoder_widths = {4, 8};
  c.bottleneck_width = 8;
  c.seed = 2;
  return c;
}

struct Fixture {
  std::vector<data::RawSample> raw;
  data::SplitTriple split;
};

Fixture tiny_data(std::size_t n, int side = 32) {
  Fixture f;
  for (std::size_t i = 0; i < n; ++i) f.raw.push_back(data::render_synthetic(side, 77, i));
  for (std::size_t i = 0; i < n; ++i) (i % 3 == 2 ? f.split.val : f.split.train).push_back(f.raw[i].id);
  return f;
}

train::TrainConfig tiny_train(int epochs) {
  train::TrainConfig c;
  c.lr = 1e-3;
  c.max_epochs = epochs;
  c.batch_size = 2;
  c.early_stop_patience = epochs;
  c.seed = 5;
  return c;
}

TEST(EarlyStopping, PatienceCounting) {
  train::EarlyStopping s(2, true);
  EXPECT_TRUE(s.update(0, 0.5));
  EXPECT_FALSE(s.update(1, 0.5));  // ties are not improvements
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.update(2, 0.4));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 0);
  EXPECT_DOUBLE_EQ(s.best_value(), 0.5);
}

TEST(EarlyStopping, MinimizeMode) {
  const std::vector<double> loss{1.0, 0.8, 0.9, 0.85, 0.95};
  EXPECT_EQ(train::stopping_epoch(loss, 3, false), 4);
  EXPECT_EQ(train::stopping_epoch(loss, 2, false), 3);
}

TEST(EarlyStoppingProperty, NeverStopsWhileImproving) {
  std::vector<double> rising;
  for (int i = 0; i < 60; ++i) rising.push_back(i * 0.01);
  EXPECT_EQ(train::stopping_epoch(rising, 1, true), 59);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps') = lr * sign(g).
  std::vector<model::Parameter<float>> params{{"p", Tensor<float>(1, 1, 1, 3, 1.0f)}};
  Tensor<float> g(1, 1, 1, 3);
  g.data()[0] = 0.5f, g.data()[1] = -2.0f, g.data()[2] = 0.0f;
  train::Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(params, {g});
  EXPECT_NEAR(params[0].value.data()[0], 0.99f, 1e-6);
  EXPECT_NEAR(params[0].value.data()[1], 1.01f, 1e-6);
  EXPECT_EQ(params[0].value.data()[2], 1.0f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Config, ValidateRejectsBadValues) {
  auto c = tiny_train(3);
  c.lr = 0;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_train(3);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(train::parse_stop_metric("val_loss"), train::StopMetric::kValLoss);
  EXPECT_THROW(train::parse_stop_metric("val_accuracy"), Error);
}

TEST(EpochLog, JsonRoundTrip) {
  train::EpochLog log;
  log.epoch = 3;
  log.train = {0.5, 0.66666667, 4, metrics::MetricScope::kEpochMean};
  log.train_loss = 0.25;
  log.seconds = 1.5;
  const auto back = train::parse_epoch_json(train::format_epoch_json(log));
  EXPECT_EQ(back.epoch, 3);
  EXPECT_DOUBLE_EQ(back.train.iou, 0.5);
  EXPECT_EQ(back.train.n_images, 4u);
  EXPECT_EQ(back.val.n_images, 0u);
  EXPECT_EQ(train::format_epoch_csv(back), train::format_epoch_csv(log));
}

TEST(Checkpoint, RoundTripIsBitwise) {
  testing::TempDir dir("ckpt");
  model::UNet<float> net(tiny_model());
  train::TrainingState state;
  state.epoch = 4;
  state.best_metric = 0.75;
  state.best_epoch = 3;
  state.optimizer_step = 12;
  for (const auto& p : net.parameters()) {
    state.adam_m.push_back(p.value);
    state.adam_v.push_back(p.value);
  }
  train::save_checkpoint(dir / "a.ckpt", net, state);
  const auto loaded = train::load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.model.config(), net.config());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    EXPECT_EQ(loaded.model.parameters()[i].value, net.parameters()[i].value);
  }
  EXPECT_EQ(loaded.state.epoch, 4);
  EXPECT_EQ(loaded.state.optimizer_step, 12u);
  EXPECT_DOUBLE_EQ(loaded.state.best_metric, 0.75);
  ASSERT_EQ(loaded.state.adam_m.size(), net.parameters().size());
  EXPECT_EQ(loaded.state.adam_v.back(), state.adam_v.back());
}

TEST(Checkpoint, MissingFileIsIo) {
  try {
    train::load_checkpoint("/nonexistent/x.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  testing::TempDir dir("ckpt_bad");
  model::UNet<float> net(tiny_model());
  train::save_checkpoint(dir / "a.ckpt", net, {});
  const auto size = fs::file_size(dir / "a.ckpt");
  for (const std::uintmax_t offset : {std::uintmax_t{3}, size / 2, size - 5}) {
    fs::copy_file(dir / "a.ckpt", dir / "b.ckpt", fs::copy_options::overwrite_existing);
    {
      std::fstream f(dir / "b.ckpt", std::ios::in | std::ios::out | std::ios::binary);
      f.seekg(static_cast<std::streamoff>(offset));
      char c = 0;
      f.read(&c, 1);
      f.seekp(static_cast<std::streamoff>(offset));
      c = static_cast<char>(c ^ 0x5a);
      f.write(&c, 1);
    }
    try {
      train::load_checkpoint(dir / "b.ckpt");
      FAIL() << "offset " << offset;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIntegrity) << "offset " << offset;
    }
  }
  fs::resize_file(dir / "b.ckpt", size / 3);
  EXPECT_THROW(train::load_checkpoint(dir / "b.ckpt"), Error);
}

TEST(Train, FiftyEpochsGiveFiftyRows) {
  auto f = tiny_data(3, 32);
  SampleStore store(f.raw, 32);
  auto cfg = tiny_train(50);
  cfg.augmentation = false;
  const auto result = train::train(model::UNet<float>(tiny_model()), f.split, store, cfg);
  EXPECT_EQ(result.logs.size(), 50u);
  EXPECT_EQ(result.stop_reason, "max_epochs");
  EXPECT_EQ(result.logs.back().epoch, 49);
}

TEST(Train, IsDeterministic) {
  auto f = tiny_data(6);
  SampleStore store(f.raw, 32);
  const auto a = train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(3));
  const auto b = train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(3));
  ASSERT_EQ(a.logs.size(), b.logs.size());
  for (std::size_t i = 0; i < a.logs.size(); ++i) {
    EXPECT_EQ(a.logs[i].train_loss, b.logs[i].train_loss);
    EXPECT_EQ(a.logs[i].val.iou, b.logs[i].val.iou);
  }
  for (std::size_t i = 0; i < a.final_model.parameters().size(); ++i) {
    EXPECT_EQ(a.final_model.parameters()[i].value, b.final_model.parameters()[i].value);
  }
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  auto f = tiny_data(6);
  SampleStore store(f.raw, 32);
  const auto full = train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(4));
  auto half_cfg = tiny_train(4);
  half_cfg.max_epochs = 2;
  const auto half = train::train(model::UNet<float>(tiny_model()), f.split, store, half_cfg);
  train::TrainOptions options;
  options.resume = half.state;
  const auto resumed = train::train(half.final_model, f.split, store, tiny_train(4), options);
  ASSERT_EQ(resumed.logs.size(), 2u);
  EXPECT_EQ(resumed.logs.back().train_loss, full.logs.back().train_loss);
  for (std::size_t i = 0; i < full.final_model.parameters().size(); ++i) {
    EXPECT_EQ(resumed.final_model.parameters()[i].value, full.final_model.parameters()[i].value);
  }
}

TEST(Train, ValidationIsNeverAugmented) {
  auto f = tiny_data(6);
  SampleStore store(f.raw, 32);
  std::set<std::string> augmented;
  train::TrainOptions options;
  options.on_augment = [&](std::string_view id) { augmented.insert(std::string(id)); };
  train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(2), options);
  EXPECT_EQ(augmented, std::set<std::string>(f.split.train.begin(), f.split.train.end()));
}

TEST(Train, WritesLogsAndCheckpoints) {
  testing::TempDir dir("train_out");
  auto f = tiny_data(6);
  SampleStore store(f.raw, 32);
  train::TrainOptions options;
  options.out_dir = dir.path();
  const auto result = train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(3), options);
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  const auto logs = train::read_epoch_log(dir / "epoch_log.jsonl");
  ASSERT_EQ(logs.size(), 3u);
  EXPECT_EQ(train::format_epoch_csv(logs[1]), train::format_epoch_csv(result.logs[1]));
  std::ifstream csv(dir / "epoch_log.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, train::kEpochCsvHeader);
  const auto last = train::load_checkpoint(dir / "last.ckpt");
  EXPECT_EQ(last.state.epoch, 2);
  EXPECT_EQ(last.model.parameters()[0].value, result.final_model.parameters()[0].value);
}

TEST(Train, EarlyStoppingHaltsOnPlateau) {
  auto f = tiny_data(6);
  SampleStore store(f.raw, 32);
  auto cfg = tiny_train(40);
  cfg.lr = 1e-9;  // metrics cannot move, so patience runs out
  cfg.early_stop_patience = 3;
  cfg.augmentation = false;
  const auto result = train::train(model::UNet<float>(tiny_model()), f.split, store, cfg);
  EXPECT_EQ(result.stop_reason, "early_stopping");
  EXPECT_EQ(result.logs.size(), 4u);
  EXPECT_EQ(result.state.best_epoch, 0);
}

TEST(Train, EmptyValidationFallsBackToTraining) {
  auto f = tiny_data(4);
  f.split.train.insert(f.split.train.end(), f.split.val.begin(), f.split.val.end());
  f.split.val.clear();
  SampleStore store(f.raw, 32);
  const auto result = train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(2));
  EXPECT_EQ(result.logs.size(), 2u);
  EXPECT_EQ(result.logs[0].val.n_images, 0u);
  EXPECT_GE(result.state.best_epoch, 0);
}

TEST(Train, EmptyTrainingSplitIsRejected) {
  auto f = tiny_data(3);
  f.split.train.clear();
  SampleStore store(f.raw, 32);
  try {
    train::train(model::UNet<float>(tiny_model()), f.split, store, tiny_train(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
}

TEST(Train, NonFiniteLossIsReported) {
  auto f = tiny_data(3);
  SampleStore store(f.raw, 32);
  model::UNet<float> net(tiny_model());
  net.parameter("head.bias").value.data()[0] = std::nanf("");
  try {
    train::train(net, f.split, store, tiny_train(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

}  // namespace
}  // namespace polypseg
