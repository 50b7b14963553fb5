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

#include <benchmark/benchmark.h>

#include <random>

#include "polypseg/gradcam.hpp"
#include "polypseg/layers.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/unet.hpp"

namespace {

using namespace polypseg;

Tensor<float> noise(int n, int c, int h, int w, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> t(n, c, h, w);
  for (float& v : t.values()) v = u(gen);
  return t;
}

// 3x3 same-padded conv, args: channels in/out, side.
void BM_Conv3x3Forward(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int side = static_cast<int>(state.range(2));
  const auto in = noise(1, cin, side, side, 1);
  const auto w = noise(cout, cin, 3, 3, 2);
  const Tensor<float> b(1, cout, 1, 1);
  Tensor<float> out;
  for (auto _ : state) {
    nn::conv2d_forward(in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(model::conv_macs(cin, cout, 3, side, side)),
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3x3Forward)->Args({3, 64, 128})->Args({64, 64, 128})->Args({128, 128, 64})->Unit(benchmark::kMillisecond);

void BM_UNetForward(benchmark::State& state) {
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16, 32};
  cfg.bottleneck_width = 64;
  const model::UNet<float> net(cfg);
  const int side = static_cast<int>(state.range(0));
  const auto x = noise(1, 3, side, side, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x).probs.data());
}
BENCHMARK(BM_UNetForward)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_UNetTrainStep(benchmark::State& state) {
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16, 32};
  cfg.bottleneck_width = 64;
  const model::UNet<float> net(cfg);
  const auto x = noise(4, 3, 128, 128, 4);
  Tensor<float> target(4, 2, 128, 128);
  for (int n = 0; n < 4; ++n) {
    for (int y = 0; y < 128; ++y) {
      for (int c = 0; c < 128; ++c) target.at(n, (y + c) % 7 == 0 ? 1 : 0, y, c) = 1.0f;
    }
  }
  for (auto _ : state) {
    auto cap = net.forward_with_taps(x);
    Tensor<float> gp, gl;
    metrics::soft_dice_loss(cap.prediction().probs, target, metrics::kDefaultDiceEps,
                            metrics::DiceMode::kForeground, &gp);
    nn::softmax_channels_backward(cap.prediction().probs, gp, gl);
    auto grads = net.zero_gradients();
    cap.backward(gl, &grads, std::nullopt, false);
    benchmark::DoNotOptimize(grads.front().data());
  }
}
BENCHMARK(BM_UNetTrainStep)->Unit(benchmark::kMillisecond);

void BM_GradCam(benchmark::State& state) {
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16, 32};
  cfg.bottleneck_width = 64;
  const model::UNet<float> net(cfg);
  const auto x = noise(1, 3, 128, 128, 5);
  for (auto _ : state) benchmark::DoNotOptimize(explain::gradcam(net, x).values.data.data());
}
BENCHMARK(BM_GradCam)->Unit(benchmark::kMillisecond);

void BM_MaskMetrics(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Mask a = make_mask(side, side), b = make_mask(side, side);
  std::mt19937 gen(6);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = gen() & 1u;
    b.data[i] = gen() & 1u;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::iou(a, b));
    benchmark::DoNotOptimize(metrics::dice_f(a, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.pixels()));
}
BENCHMARK(BM_MaskMetrics)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
