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

#include "polypseg/metrics.hpp"

#include "polypseg/error.hpp"

namespace polypseg::metrics {
namespace {

// Soft Dice loss of one class channel, pooled over the batch.
template <typename T>
double channel_dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot, int channel, double eps, double scale,
                         Tensor<T>* grad) {
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
  const std::size_t plane = probs.plane();
  for (int n = 0; n < probs.batch(); ++n) {
    const T* p = probs.channel(n, channel);
    const T* g = onehot.channel(n, channel);
    for (std::size_t i = 0; i < plane; ++i) {
      inter += static_cast<double>(p[i]) * g[i];
      sum_p += p[i];
      sum_g += g[i];
    }
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_p + sum_g + eps;
  if (grad != nullptr) {
    // dL/dp_i = -(2 g_i den - num) / den^2
    const double inv_den2 = 1.0 / (den * den);
    for (int n = 0; n < probs.batch(); ++n) {
      const T* g = onehot.channel(n, channel);
      T* d = grad->channel(n, channel);
      for (std::size_t i = 0; i < plane; ++i) {
        d[i] += static_cast<T>(scale * -(2.0 * g[i] * den - num) * inv_den2);
      }
    }
  }
  return 1.0 - num / den;
}

}  // namespace

template <typename T>
LossValue soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot, double eps, DiceMode mode,
                         Tensor<T>* grad_probs) {
  if (!probs.same_shape(onehot)) {
    fail(ErrorKind::kValidation, "soft Dice shape mismatch: " + shape_string(probs.shape()) + " vs " +
                                     shape_string(onehot.shape()));
  }
  if (probs.channels() != 2) fail(ErrorKind::kValidation, "soft Dice expects two channels (background, polyp)");
  if (grad_probs != nullptr) *grad_probs = Tensor<T>(probs.batch(), probs.channels(), probs.height(), probs.width());

  LossValue out;
  out.eps = eps;
  if (mode == DiceMode::kForeground) {
    out.value = channel_dice_loss(probs, onehot, 1, eps, 1.0, grad_probs);
  } else {
    out.value = 0.5 * (channel_dice_loss(probs, onehot, 0, eps, 0.5, grad_probs) +
                       channel_dice_loss(probs, onehot, 1, eps, 0.5, grad_probs));
  }
  return out;
}

template <typename T>
Mask binarize_prediction(const Tensor<T>& probs, int n) {
  if (probs.channels() != 2) fail(ErrorKind::kValidation, "binarize_prediction expects two channels");
  Mask out = make_mask(probs.height(), probs.width());
  const T* bg = probs.channel(n, 0);
  const T* fg = probs.channel(n, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fg[i] > bg[i] ? 1 : 0;
  return out;
}

template LossValue soft_dice_loss<float>(const Tensor<float>&, const Tensor<float>&, double, DiceMode,
                                         Tensor<float>*);
template LossValue soft_dice_loss<double>(const Tensor<double>&, const Tensor<double>&, double, DiceMode,
                                          Tensor<double>*);
template Mask binarize_prediction<float>(const Tensor<float>&, int);
template Mask binarize_prediction<double>(const Tensor<double>&, int);

Confusion confusion(const Mask& pred, const Mask& truth) {
  if (!pred.same_extent(truth.height, truth.width) || pred.channels != truth.channels) {
    fail(ErrorKind::kValidation, "mask shape mismatch");
  }
  if (!is_binary(pred) || !is_binary(truth)) fail(ErrorKind::kValidation, "masks must be binary");
  Confusion c;
  const std::uint8_t* p = pred.data.data();
  const std::uint8_t* g = truth.data.data();
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    c.intersection += p[i] & g[i];
    c.pred += p[i];
    c.truth += g[i];
  }
  return c;
}

double iou(const Confusion& c) {
  const std::uint64_t u = c.union_size();
  return u == 0 ? 1.0 : static_cast<double>(c.intersection) / static_cast<double>(u);
}

double dice_f(const Confusion& c) {
  const std::uint64_t total = c.pred + c.truth;
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(c.intersection) / static_cast<double>(total);
}

double iou(const Mask& pred, const Mask& truth) { return iou(confusion(pred, truth)); }
double dice_f(const Mask& pred, const Mask& truth) { return dice_f(confusion(pred, truth)); }

std::string_view to_string(MetricScope scope) {
  switch (scope) {
    case MetricScope::kPerImage: return "per-image";
    case MetricScope::kEpochMean: return "epoch-mean";
    case MetricScope::kSplitMean: return "split-mean";
  }
  return "unknown";
}

void MetricAccumulator::add(const Mask& pred, const Mask& truth) {
  const Confusion c = confusion(pred, truth);
  add(iou(c), dice_f(c));
}

void MetricAccumulator::add(double iou_value, double dice_value) {
  iou_sum_ += iou_value;
  dice_sum_ += dice_value;
  ++n_;
}

MetricRecord MetricAccumulator::mean(MetricScope scope) const {
  MetricRecord r;
  r.scope = scope;
  r.n_images = n_;
  if (n_ > 0) {
    r.iou = iou_sum_ / static_cast<double>(n_);
    r.f_dice = dice_sum_ / static_cast<double>(n_);
  }
  return r;
}

}  // namespace polypseg::metrics
