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

// Acceptance suite: one PASS/FAIL line per criterion, exit status = number
// of failed criteria (capped at 100).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "oracle_metrics.hpp"
#include "overfit.hpp"
#include "polypseg/checkpoint.hpp"
#include "polypseg/dataset.hpp"
#include "polypseg/gradcam.hpp"
#include "polypseg/layers.hpp"
#include "polypseg/metrics.hpp"
#include "polypseg/preprocess.hpp"
#include "polypseg/report.hpp"
#include "polypseg/unet.hpp"
#include "test_util.hpp"

namespace polypseg {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

/// Step budget for the overfit criterion, fixed from a calibration run
/// (first crossing of Dice-F 0.95 at step 57, stable above 0.975 from 80).
constexpr int kOverfitStepBudget = 150;

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;  // extra informational lines
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const Mask a = testing::random_mask(rng, 8, 8, rng.uniform());
    const Mask b = testing::random_mask(rng, 8, 8, rng.uniform());
    const auto c = oracle::count(a, b);
    const auto conf = metrics::confusion(a, b);
    const bool counts_ok = static_cast<std::int64_t>(conf.intersection) == c.tp &&
                           static_cast<std::int64_t>(conf.pred) == c.tp + c.fp &&
                           static_cast<std::int64_t>(conf.truth) == c.tp + c.fn;
    if (!counts_ok || metrics::iou(a, b) != oracle::to_double(oracle::iou_fraction(c)) ||
        metrics::dice_f(a, b) != oracle::to_double(oracle::dice_fraction(c))) {
      ++mismatches;
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 5.0, fmt("1000 pairs, %d mismatches, %.3f s (limit 5 s)", mismatches, s)};
}

Outcome metric_identity() {
  Rng rng(102);
  double worst = 0.0;
  int both_empty = 0, convention_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    // Low densities make empty masks (and both-empty pairs) show up.
    const Mask a = testing::random_mask(rng, 8, 8, i % 10 == 0 ? 0.0 : rng.uniform());
    const Mask b = testing::random_mask(rng, 8, 8, i % 20 == 0 ? 0.0 : rng.uniform());
    const double j = metrics::iou(a, b), f = metrics::dice_f(a, b);
    const auto c = oracle::count(a, b);
    if (c.tp + c.fp + c.fn == 0) {
      ++both_empty;
      convention_ok += (j == 1.0 && f == 1.0) ? 1 : 0;
      continue;
    }
    worst = std::max(worst, std::abs(f - 2.0 * j / (1.0 + j)));
  }
  return {worst <= 1e-12 && convention_ok == both_empty,
          fmt("max |F - 2J/(1+J)| = %.3e over %d pairs; both-empty pairs %d, scored (1,1): %d", worst,
              1000 - both_empty, both_empty, convention_ok)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16};
  cfg.bottleneck_width = 32;
  cfg.seed = 7;
  model::UNet<double> net(cfg);
  Rng rng(103);
  const auto x = testing::random_tensor<double>(rng, 1, 3, 32, 32, 0.0, 1.0);
  const auto target = testing::random_onehot<double>(rng, 1, 32, 32);

  // Analytic gradient once, then every parameter entry by central differences.
  auto capture = net.forward_with_taps(x);
  Tensor<double> grad_probs, grad_logits;
  metrics::soft_dice_loss(capture.prediction().probs, target, metrics::kDefaultDiceEps,
                          metrics::DiceMode::kForeground, &grad_probs);
  nn::softmax_channels_backward(capture.prediction().probs, grad_probs, grad_logits);
  auto grads = net.zero_gradients();
  capture.backward(grad_logits, &grads, std::nullopt, false);
  const auto loss_at = [&] { return metrics::soft_dice_loss(net.forward(x).probs, target).value; };
  const auto central = [&](double& v, double h) {
    const double saved = v;
    v = saved + h;
    const double plus = loss_at();
    v = saved - h;
    const double minus = loss_at();
    v = saved;
    return (plus - minus) / (2.0 * h);
  };

  const double step = 1e-4, tol = 1e-4;
  double max_rel = 0.0;
  std::size_t checked = 0;
  struct Miss {
    std::size_t param, index;
    double analytic, numeric, rel;
  };
  std::vector<Miss> misses;
  auto& params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].value.size(); ++k) {
      const double numeric = central(params[p].value.data()[k], step);
      const double analytic = grads[p].data()[k];
      const double rel = testing::relative_error(analytic, numeric, 1e-12);
      max_rel = std::max(max_rel, rel);
      if (rel >= tol) misses.push_back({p, k, analytic, numeric, rel});
      ++checked;
    }
  }
  const double main_seconds = seconds_since(t0);

  Outcome out;
  out.pass = misses.empty() && main_seconds < 120.0;
  out.detail = fmt("%zu parameters, step 1e-4, max relative error %.3e (limit 1e-4), %zu entries over, %.1f s",
                   checked, max_rel, misses.size(), main_seconds);

  // Diagnosis of the misses: re-difference with a step small enough to stay
  // on one linear piece of every ReLU / max-pool.
  if (!misses.empty()) {
    // Still-straddling entries sit within 1e-6 of a kink; there the analytic
    // value is the slope of the piece the point lies on, which one of the
    // one-sided differences sees.
    const auto one_sided = [&](double& v, double h) {
      const double saved = v, base = loss_at();
      v = saved + h;
      const double plus = loss_at();
      v = saved - h;
      const double minus = loss_at();
      v = saved;
      return std::pair{(plus - base) / h, (base - minus) / h};
    };
    std::size_t resolved = 0, one_side = 0;
    double worst_small = 0.0;
    std::map<std::string, int> by_param;
    for (const auto& m : misses) {
      double& v = params[m.param].value.data()[m.index];
      // Loss roundoff (~1e-16) over the step bounds the absolute accuracy.
      const double rel = testing::relative_error(m.analytic, central(v, 1e-6), 1e-6);
      ++by_param[params[m.param].name];
      if (rel < tol) {
        ++resolved;
        continue;
      }
      const auto [fwd, bwd] = one_sided(v, 1e-7);
      const double side = std::min(testing::relative_error(m.analytic, fwd, 1e-6),
                                   testing::relative_error(m.analytic, bwd, 1e-6));
      if (side < 1e-2) {
        ++one_side;
      } else {
        worst_small = std::max(worst_small, side);
      }
    }
    out.notes.push_back(fmt("diagnosis: of %zu over-limit entries, %zu agree to < 1e-4 with a central difference at "
                            "step 1e-6 and %zu more agree to < 1e-2 with a one-sided difference at step 1e-7 (kink "
                            "within 1e-6); unexplained: %zu (worst %.2e)",
                            misses.size(), resolved, one_side, misses.size() - resolved - one_side, worst_small));
    std::string layers;
    for (const auto& [name, count] : by_param) layers += fmt(" %s:%d", name.c_str(), count);
    out.notes.push_back("over-limit entries by parameter:" + layers);
    const auto& w = *std::max_element(misses.begin(), misses.end(),
                                      [](const Miss& a, const Miss& b) { return a.rel < b.rel; });
    out.notes.push_back(fmt("worst entry %s[%zu]: analytic %.6e, numeric(1e-4) %.6e",
                            params[w.param].name.c_str(), w.index, w.analytic, w.numeric));
  }
  out.notes.push_back(fmt("total time including diagnosis %.1f s", seconds_since(t0)));
  return out;
}

Outcome softmax_normalization() {
  Rng rng(104);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = testing::random_tensor<float>(rng, 2, 2, 16, 16, -50.0, 50.0);
    Tensor<float> probs;
    nn::softmax_channels(logits, probs);
    for (int n = 0; n < 2; ++n) {
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          worst = std::max(worst, std::abs(static_cast<double>(probs.at(n, 0, y, x)) + probs.at(n, 1, y, x) - 1.0));
        }
      }
    }
  }
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16, 32};
  cfg.bottleneck_width = 64;
  const model::UNet<float> net(cfg);
  for (int trial = 0; trial < 5; ++trial) {
    const auto probs = net.forward(testing::random_tensor<float>(rng, 2, 3, 64, 64, -3.0, 3.0)).probs;
    for (int n = 0; n < 2; ++n) {
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          worst = std::max(worst, std::abs(static_cast<double>(probs.at(n, 0, y, x)) + probs.at(n, 1, y, x) - 1.0));
        }
      }
    }
  }
  return {worst <= 1e-5, fmt("max per-pixel |sum_c p - 1| = %.3e (limit 1e-5), layer and U-Net outputs", worst)};
}

std::optional<testing::OverfitOutcome> g_overfit;

Outcome overfit() {
  g_overfit = testing::run_overfit(testing::overfit_setup(kOverfitStepBudget));
  const auto& o = *g_overfit;
  return {o.final_dice > 0.95 && o.seconds < 600.0,
          fmt("4 synthetic 128x128 samples, U-Net [8,16,32]/64, %d steps: training Dice-F %.4f (IoU %.4f), "
              "first > 0.95 at step %d, %.1f s (limit 600 s)",
              kOverfitStepBudget, o.final_dice, o.final_iou, o.first_step_above, o.seconds)};
}

data::DatasetManifest manifest_of(std::size_t n) {
  data::DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) m.entries.push_back({fmt("id_%05zu", i), {}, {}});
  m.checksum = data::ids_checksum(m.ids());
  return m;
}

Outcome split_correctness() {
  const auto t0 = Clock::now();
  const auto kvasir = data::split_manifest(manifest_of(1000), 0);
  const bool sizes_ok = kvasir.train.size() == 792 && kvasir.val.size() == 88 && kvasir.test.size() == 120;
  int bad = 0;
  for (std::size_t n = 3; n <= 2000; ++n) {
    const auto m = manifest_of(n);
    const auto a = data::split_manifest(m, n * 31);
    const auto b = data::split_manifest(m, n * 31);
    std::set<std::string> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    const auto sizes = data::split_sizes(n);
    const bool ok = a.train == b.train && a.val == b.val && a.test == b.test && all.size() == n &&
                    a.train.size() + a.val.size() + a.test.size() == n && a.test.size() == sizes.test &&
                    a.val.size() == sizes.val;
    bad += ok ? 0 : 1;
  }
  return {sizes_ok && bad == 0,
          fmt("N=1000 -> %zu/%zu/%zu; partition+determinism violations for N in [3,2000]: %d (%.1f s)",
              kvasir.train.size(), kvasir.val.size(), kvasir.test.size(), bad, seconds_since(t0))};
}

Outcome augmentation_statistics() {
  Rng rng(105);
  const preprocess::AugmentPolicy policy;
  int flips = 0;
  for (int i = 0; i < 10000; ++i) flips += preprocess::draw_augment(policy, rng).hflip ? 1 : 0;
  const double freq = flips / 10000.0;
  const bool freq_ok = freq >= 0.485 && freq <= 0.515;

  bool twice_ok = true, flips_consistent = true;
  double worst_rot_iou = 1.0;
  for (int s = 0; s < 20; ++s) {
    // The image encodes its own mask, so any misalignment shows up directly.
    auto raw = data::render_synthetic(64, 500, static_cast<std::size_t>(s));
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) raw.image.at(y, x, c) = raw.mask.at(y, x) ? 255 : 0;
      }
    }
    const auto sample = preprocess::prepare_sample(raw, 64);
    for (int which = 0; which < 2; ++which) {
      preprocess::AugmentDraw d;
      (which == 0 ? d.hflip : d.vflip) = true;
      const auto once = preprocess::augment(sample, d);
      const auto twice = preprocess::augment(once, d);
      twice_ok = twice_ok && twice.image == sample.image && twice.mask == sample.mask;
      for (int y = 0; y < 64 && flips_consistent; ++y) {
        for (int x = 0; x < 64; ++x) {
          const bool img_fg = once.image.at(y, x, 0) > 0.5f;
          if (img_fg != (once.mask.at(y, x) == 1)) {
            flips_consistent = false;
            break;
          }
        }
      }
    }
    for (double angle : {-15.0, -7.5, 7.5, 15.0}) {
      preprocess::AugmentDraw d;
      d.angle_degrees = angle;
      d.scale = 1.0 + 0.005 * (s % 20 - 10);
      const auto out = preprocess::augment(sample, d);
      Mask from_image = make_mask(64, 64);
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) from_image.at(y, x) = out.image.at(y, x, 0) > 0.5f ? 1 : 0;
      }
      worst_rot_iou = std::min(worst_rot_iou, metrics::iou(from_image, out.mask));
    }
  }
  return {freq_ok && twice_ok && flips_consistent && worst_rot_iou >= 0.9,
          fmt("hflip frequency %.4f in [0.485, 0.515]: %s; flip twice exact: %s; flips aligned: %s; "
              "worst rotation IoU %.4f (>= 0.9)",
              freq, freq_ok ? "yes" : "no", twice_ok ? "yes" : "no", flips_consistent ? "yes" : "no",
              worst_rot_iou)};
}

Tensor<float> as_batch(const preprocess::ProcessedSample& s) { return preprocess::stack_images(std::span(&s, 1)); }

Outcome gradcam_suite() {
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16};
  cfg.bottleneck_width = 16;
  cfg.seed = 3;
  std::vector<preprocess::ProcessedSample> inputs;
  for (std::size_t i = 0; i < 4; ++i) inputs.push_back(preprocess::prepare_sample(data::render_synthetic(32, 600, i), 32));

  // (a) zero-weight path
  model::UNet<float> zeroed(cfg);
  zeroed.parameter("head.weight").value.fill(0.0f);
  bool a_ok = true;
  for (const auto& s : inputs) {
    for (float v : explain::gradcam(zeroed, as_batch(s)).values.data) a_ok = a_ok && v == 0.0f;
  }

  // (b) one-channel toy with d(target)/dA = 1
  model::UNetConfig one;
  one.encoder_widths = {1, 2};
  one.bottleneck_width = 2;
  one.seed = 4;
  model::UNet<double> toy(one);
  auto& hw = toy.parameter("head.weight").value;
  auto& hb = toy.parameter("head.bias").value;
  hw.at(0, 0, 0, 0) = 0.0, hw.at(1, 0, 0, 0) = 1.0;
  hb.at(0, 0, 0, 0) = -1000.0, hb.at(0, 1, 0, 0) = 0.0;
  Rng rng(106);
  const auto x = testing::random_tensor<double>(rng, 1, 3, 16, 16, 0.0, 1.0);
  const auto cap = toy.forward_with_taps(x);
  const auto& act = cap.activation(toy.last_decoder_tap());
  const auto [lo, hi] = std::minmax_element(act.data(), act.data() + act.size());
  const auto heat = explain::gradcam(toy, x);
  double b_err = 0.0;
  for (int y = 0; y < 16; ++y) {
    for (int xx = 0; xx < 16; ++xx) {
      const double expected = (std::max(act.at(0, 0, y, xx), 0.0) - *lo) / (*hi - *lo);
      b_err = std::max(b_err, std::abs(heat.values.at(y, xx) - expected));
    }
  }
  const bool b_ok = *hi > *lo && b_err <= 1e-6;

  // (c) range and shape, (d) weight randomization
  const model::UNet<float> net(cfg);
  model::UNet<float> scrambled = net;
  scrambled.reinitialize("", 999);
  bool c_ok = true;
  double delta = 0.0;
  std::size_t count = 0;
  for (const auto& s : inputs) {
    const auto h = explain::gradcam(net, as_batch(s));
    const auto r = explain::gradcam(scrambled, as_batch(s));
    c_ok = c_ok && h.values.height == 32 && h.values.width == 32 && h.values.channels == 1;
    for (std::size_t k = 0; k < h.values.data.size(); ++k) {
      c_ok = c_ok && h.values.data[k] >= 0.0f && h.values.data[k] <= 1.0f;
      delta += std::abs(h.values.data[k] - r.values.data[k]);
    }
    count += h.values.data.size();
  }
  delta /= static_cast<double>(count);
  const bool d_ok = delta > 0.05;

  // (e) coverage on the overfit model versus the uniform-heatmap baseline
  int beats = 0;
  std::string e_detail = "overfit model unavailable";
  if (g_overfit) {
    e_detail.clear();
    for (const auto& raw : g_overfit->samples) {
      const auto s = preprocess::prepare_sample(raw, 128);
      const auto h = explain::gradcam(g_overfit->model, as_batch(s));
      const auto cov = explain::attention_coverage(h, s.mask);
      const double baseline = static_cast<double>(std::count(s.mask.data.begin(), s.mask.data.end(), 1)) /
                              static_cast<double>(s.mask.pixels());
      beats += (!cov.degenerate && cov.value > baseline) ? 1 : 0;
      e_detail += fmt(" %.3f>%.3f", cov.value, baseline);
    }
  }
  const bool e_ok = beats >= 3;

  return {a_ok && b_ok && c_ok && d_ok && e_ok,
          fmt("(a) zero path all-zero: %s; (b) toy max err %.2e; (c) range/shape: %s; (d) mean |delta| %.3f; "
              "(e) coverage beats baseline on %d/4:%s",
              a_ok ? "yes" : "no", b_err, c_ok ? "yes" : "no", delta, beats, e_detail.c_str())};
}

Outcome accounting() {
  const bool single = model::conv_params(3, 64, 3) == 1792;
  const model::UNetConfig def;
  const auto p1 = model::count_params(def), p2 = model::count_params(model::UNetConfig{});
  const auto f1 = model::count_flops(def, 256, 256), f2 = model::count_flops(model::UNetConfig{}, 256, 256);
  const auto instantiated = model::count_params(model::UNet<float>(def));
  const bool deterministic = p1 == p2 && p1 == instantiated && f1.flops == f2.flops && f1.macs == f2.macs;
  Outcome out{single && deterministic,
              fmt("single 3x3 conv 3->64: %llu params; default params %llu (instantiated %llu), deterministic: %s",
                  static_cast<unsigned long long>(model::conv_params(3, 64, 3)),
                  static_cast<unsigned long long>(p1), static_cast<unsigned long long>(instantiated),
                  deterministic ? "yes" : "no")};
  out.notes.push_back(fmt("informational: params %llu vs reference %llu (ratio %.4f); 256x256 forward %.3f GMAC / "
                          "%.3f GFLOP vs reference %.3fG (ratio to GMAC %.3f, to GFLOP %.3f)",
                          static_cast<unsigned long long>(p1),
                          static_cast<unsigned long long>(report::kReferenceParams),
                          static_cast<double>(p1) / report::kReferenceParams, f1.macs / 1e9, f1.flops / 1e9,
                          report::kReferenceGflops, f1.macs / 1e9 / report::kReferenceGflops,
                          f1.flops / 1e9 / report::kReferenceGflops));
  return out;
}

Outcome checkpoint_round_trip() {
  testing::TempDir dir("acceptance_ckpt");
  model::UNetConfig cfg;
  cfg.encoder_widths = {8, 16, 32};
  cfg.bottleneck_width = 64;
  cfg.seed = 17;
  model::UNet<float> net(cfg);
  net.reinitialize("", 18);
  Rng rng(107);
  for (auto& p : net.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.value.values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
  }
  train::TrainingState state;
  state.epoch = 3;
  train::save_checkpoint(dir / "model.ckpt", net, state);
  const auto loaded = train::load_checkpoint(dir / "model.ckpt");
  int identical = 0;
  for (int i = 0; i < 10; ++i) {
    const auto x = testing::random_tensor<float>(rng, 1, 3, 64, 64, 0.0, 1.0);
    const auto a = net.forward(x), b = loaded.model.forward(x);
    identical += (a.logits == b.logits && a.probs == b.probs) ? 1 : 0;
  }
  return {identical == 10, fmt("%d/10 random inputs give bitwise-identical logits and probabilities", identical)};
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  testing::TempDir dir("acceptance_e2e");
  const auto ds = (dir / "data").string();
  const auto cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << "{\n  \"dataset\": {\"root\": \"" << fs::path(ds).generic_string() << "\"},\n"
                          << "  \"preprocess\": {\"side\": 128},\n"
                          << "  \"model\": {\"encoder_widths\": [16, 32, 64], \"bottleneck_width\": 128},\n"
                          << "  \"train\": {\"max_epochs\": 2, \"batch_size\": 4},\n"
                          << "  \"output\": {\"dir\": \"" << (dir / "run").generic_string() << "\"}\n}\n";
  std::ostringstream log;
  const auto step = [&](std::vector<std::string> args) {
    std::ostringstream err;
    const int code = cli::run(args, log, err);
    if (code != 0) log << args[0] << " failed: " << err.str();
    return code;
  };
  const std::string c = cfg_path.string();
  std::vector<std::pair<std::string, int>> codes{
      {"synth", step({"synth", "--count", "16", "--size", "128", "--seed", "11", "--out", ds})},
      {"prepare", step({"prepare", "--config", c})},
      {"train", step({"train", "--config", c})},
      {"eval", step({"eval", "--config", c})},
      {"explain", step({"explain", "--config", c})}};
  bool all_zero = true;
  std::string codes_text;
  for (const auto& [name, code] : codes) {
    all_zero = all_zero && code == 0;
    codes_text += fmt(" %s=%d", name.c_str(), code);
  }
  const auto count_png = [](const fs::path& d) {
    int n = 0;
    if (fs::is_directory(d)) {
      for (const auto& e : fs::directory_iterator(d)) n += e.path().extension() == ".png" ? 1 : 0;
    }
    return n;
  };
  const fs::path run = dir / "run";
  const bool epoch_log = fs::exists(run / "epoch_log.csv");
  const bool test_report = fs::exists(run / "test_report.csv");
  const int panels = count_png(run / "panels"), cams = count_png(run / "cam");
  const double s = seconds_since(t0);
  Outcome out{all_zero && epoch_log && test_report && panels >= 1 && cams >= 1 && s < 300.0,
              fmt("exit codes%s; epoch_log.csv %s, test_report.csv %s, %d panel PNG, %d heatmap PNG; %.1f s "
                  "(limit 300 s)",
                  codes_text.c_str(), epoch_log ? "yes" : "no", test_report ? "yes" : "no", panels, cams, s)};
  if (!all_zero) out.notes.push_back(log.str());
  return out;
}

}  // namespace
}  // namespace polypseg

int main() {
  using namespace polypseg;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  // 5 runs before 8 because the Grad-CAM coverage check reuses its model.
  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", metric_oracle},
      {2, "metric identity", metric_identity},
      {3, "soft Dice gradient check", gradient_check},
      {4, "softmax normalization", softmax_normalization},
      {5, "overfit convergence", overfit},
      {6, "split correctness", split_correctness},
      {7, "augmentation statistics", augmentation_statistics},
      {8, "Grad-CAM suite", gradcam_suite},
      {9, "parameter and FLOP accounting", accounting},
      {10, "checkpoint round-trip", checkpoint_round_trip},
      {11, "end-to-end smoke", end_to_end},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s  criterion %2d  %-30s %s  [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), seconds_since(t0));
    for (const auto& note : o.notes) std::printf("      %s\n", note.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return std::min(failed, 100);
}
