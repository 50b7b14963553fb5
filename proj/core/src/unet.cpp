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

#include "polypseg/unet.hpp"

#include <cmath>

#include "polypseg/error.hpp"
#include "polypseg/layers.hpp"
#include "polypseg/rng.hpp"

namespace polypseg::model {

int UNetConfig::divisibility() const {
  int d = 1;
  for (int i = 0; i < depth(); ++i) d *= pool_factor;
  return d;
}

void UNetConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::kConfig, "model.in_channels must be >= 1");
  if (num_classes < 2) fail(ErrorKind::kConfig, "model.num_classes must be >= 2");
  if (depth() < 2) fail(ErrorKind::kConfig, "model.encoder_widths needs at least 2 entries (depth >= 2)");
  for (int i = 0; i < depth(); ++i) {
    if (encoder_widths[i] < 1) fail(ErrorKind::kConfig, "model.encoder_widths entries must be >= 1");
    if (i > 0 && encoder_widths[i] <= encoder_widths[i - 1]) {
      fail(ErrorKind::kConfig, "model.encoder_widths must be strictly increasing");
    }
  }
  if (bottleneck_width < 1) fail(ErrorKind::kConfig, "model.bottleneck_width must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) fail(ErrorKind::kConfig, "model.conv_kernel must be odd");
  if (pool_factor != 2) fail(ErrorKind::kConfig, "model.pool_factor: only 2 is supported");
}

// ---------------------------------------------------------------------------

template <typename T>
struct ForwardCache {
  struct Encoder {
    Tensor<T> mid, out, pooled;
    std::vector<std::uint8_t> argmax;
  };
  struct Decoder {
    Tensor<T> up, cat, mid, out;
  };

  Tensor<T> input;
  std::vector<Encoder> encoders;
  Tensor<T> bottleneck_mid, bottleneck_out;
  std::vector<Decoder> decoders;
  Prediction<T> prediction;
};

namespace {

template <typename T>
void conv_relu(const Tensor<T>& in, const std::vector<Parameter<T>>& params, const typename UNet<T>::ConvRef& ref,
               Tensor<T>& out) {
  nn::conv2d_forward(in, params[ref.weight].value, params[ref.bias].value, out);
  nn::relu_inplace(out);
}

// Destination of one layer's parameter gradients: the caller's list, or a
// scratch pair that is thrown away when only activation gradients matter.
template <typename T>
class GradTargets {
 public:
  GradTargets(const std::vector<Parameter<T>>& params, std::vector<Tensor<T>>* grads)
      : params_(params), grads_(grads) {}

  std::pair<Tensor<T>&, Tensor<T>&> layer(int weight, int bias) {
    if (grads_) return {(*grads_)[weight], (*grads_)[bias]};
    const auto& ws = params_[weight].value.shape();
    const auto& bs = params_[bias].value.shape();
    weight_sink_ = Tensor<T>(ws[0], ws[1], ws[2], ws[3]);
    bias_sink_ = Tensor<T>(bs[0], bs[1], bs[2], bs[3]);
    return {weight_sink_, bias_sink_};
  }

 private:
  const std::vector<Parameter<T>>& params_;
  std::vector<Tensor<T>>* grads_;
  Tensor<T> weight_sink_, bias_sink_;
};

// `grad` holds d/d(out) on entry and is clobbered; d/d(in) goes to grad_in.
template <typename T>
void conv_relu_backward(const Tensor<T>& in, const Tensor<T>& out, const std::vector<Parameter<T>>& params,
                        const typename UNet<T>::ConvRef& ref, Tensor<T>& grad, Tensor<T>* grad_in,
                        GradTargets<T>& targets) {
  nn::relu_backward_inplace(out, grad);
  auto [gw, gb] = targets.layer(ref.weight, ref.bias);
  nn::conv2d_backward(in, params[ref.weight].value, grad, grad_in, gw, gb);
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) fail(ErrorKind::kShape, "gradient shape mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
UNet<T>::UNet(UNetConfig config) : config_(std::move(config)) {
  config_.validate();
  const int depth = config_.depth();
  const int k = config_.conv_kernel;

  int channels = config_.in_channels;
  for (int i = 0; i < depth; ++i) {
    const std::string prefix = "encoder." + std::to_string(i);
    EncoderRef ref;
    ref.conv1 = add_conv(prefix + ".conv1", channels, config_.encoder_widths[i], k);
    ref.conv2 = add_conv(prefix + ".conv2", config_.encoder_widths[i], config_.encoder_widths[i], k);
    encoders_.push_back(ref);
    tap_names_.push_back(prefix);
    channels = config_.encoder_widths[i];
  }
  bottleneck_.conv1 = add_conv("bottleneck.conv1", channels, config_.bottleneck_width, k);
  bottleneck_.conv2 = add_conv("bottleneck.conv2", config_.bottleneck_width, config_.bottleneck_width, k);
  tap_names_.push_back("bottleneck");
  channels = config_.bottleneck_width;

  for (int j = 0; j < depth; ++j) {
    const int level = depth - 1 - j;
    const int width = config_.encoder_widths[level];
    const std::string prefix = "decoder." + std::to_string(j);
    DecoderRef ref;
    ref.up = add_upconv(prefix + ".up", channels, width);
    ref.conv1 = add_conv(prefix + ".conv1", 2 * width, width, k);
    ref.conv2 = add_conv(prefix + ".conv2", width, width, k);
    decoders_.push_back(ref);
    tap_names_.push_back(prefix);
    channels = width;
  }
  head_ = add_conv("head", channels, config_.num_classes, 1);

  for (std::size_t i = 0; i < params_.size(); ++i) init_parameter(params_[i], config_.seed, i);
}

template <typename T>
typename UNet<T>::ConvRef UNet<T>::add_conv(const std::string& name, int in, int out, int kernel) {
  ConvRef ref;
  ref.weight = static_cast<int>(params_.size());
  params_.push_back({name + ".weight", Tensor<T>(out, in, kernel, kernel)});
  ref.bias = static_cast<int>(params_.size());
  params_.push_back({name + ".bias", Tensor<T>(1, out, 1, 1)});
  return ref;
}

template <typename T>
typename UNet<T>::ConvRef UNet<T>::add_upconv(const std::string& name, int in, int out) {
  ConvRef ref;
  ref.weight = static_cast<int>(params_.size());
  params_.push_back({name + ".weight", Tensor<T>(in, out, 2, 2)});
  ref.bias = static_cast<int>(params_.size());
  params_.push_back({name + ".bias", Tensor<T>(1, out, 1, 1)});
  return ref;
}

template <typename T>
void UNet<T>::init_parameter(Parameter<T>& param, std::uint64_t seed, std::size_t index) {
  Tensor<T>& value = param.value;
  if (param.name.ends_with(".bias")) {
    value.fill(T{0});
    return;
  }
  // Conv weights are (out, in, k, k): fan-in = in * k * k. Up-convolution
  // weights are (in, out, 2, 2) and each output pixel sees `in` inputs.
  const bool up = param.name.find(".up.") != std::string::npos;
  const double fan_in = up ? value.batch() : static_cast<double>(value.channels()) * value.height() * value.width();
  const double stddev = std::sqrt(2.0 / fan_in);
  Rng rng(derive_seed(seed, index));
  for (T& v : value.values()) v = static_cast<T>(stddev * rng.normal());
}

template <typename T>
void UNet<T>::reinitialize(std::string_view prefix, std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name.starts_with(prefix) && !params_[i].name.ends_with(".bias")) {
      init_parameter(params_[i], seed, i);
    }
  }
}

template <typename T>
Parameter<T>& UNet<T>::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  fail(ErrorKind::kLookup, "unknown parameter: " + std::string(name));
}

template <typename T>
const Parameter<T>& UNet<T>::parameter(std::string_view name) const {
  return const_cast<UNet*>(this)->parameter(name);
}

template <typename T>
std::vector<Tensor<T>> UNet<T>::zero_gradients() const {
  std::vector<Tensor<T>> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    const auto& s = p.value.shape();
    grads.emplace_back(s[0], s[1], s[2], s[3]);
  }
  return grads;
}

template <typename T>
void UNet<T>::check_input(const Tensor<T>& batch) const {
  if (batch.empty() || batch.channels() != config_.in_channels) {
    fail(ErrorKind::kShape, "expected input (B, " + std::to_string(config_.in_channels) + ", S, S), got " +
                                shape_string(batch.shape()));
  }
  const int d = config_.divisibility();
  if (batch.height() % d != 0 || batch.width() % d != 0) {
    fail(ErrorKind::kShape, "input spatial size " + std::to_string(batch.height()) + "x" +
                                std::to_string(batch.width()) + " must be divisible by " + std::to_string(d) +
                                " (pool_factor^depth)");
  }
}

template <typename T>
void UNet<T>::run_forward(const Tensor<T>& batch, ForwardCache<T>& cache) const {
  const int depth = config_.depth();
  cache.input = batch;
  cache.encoders.resize(depth);
  cache.decoders.resize(depth);

  const Tensor<T>* x = &cache.input;
  for (int i = 0; i < depth; ++i) {
    auto& enc = cache.encoders[i];
    conv_relu(*x, params_, encoders_[i].conv1, enc.mid);
    conv_relu(enc.mid, params_, encoders_[i].conv2, enc.out);
    nn::maxpool2_forward(enc.out, enc.pooled, enc.argmax);
    x = &enc.pooled;
  }
  conv_relu(*x, params_, bottleneck_.conv1, cache.bottleneck_mid);
  conv_relu(cache.bottleneck_mid, params_, bottleneck_.conv2, cache.bottleneck_out);
  x = &cache.bottleneck_out;

  for (int j = 0; j < depth; ++j) {
    auto& dec = cache.decoders[j];
    const auto& skip = cache.encoders[depth - 1 - j].out;
    nn::upconv2_forward(*x, params_[decoders_[j].up.weight].value, params_[decoders_[j].up.bias].value, dec.up);
    nn::concat_channels(skip, dec.up, dec.cat);
    conv_relu(dec.cat, params_, decoders_[j].conv1, dec.mid);
    conv_relu(dec.mid, params_, decoders_[j].conv2, dec.out);
    x = &dec.out;
  }
  nn::conv2d_forward(*x, params_[head_.weight].value, params_[head_.bias].value, cache.prediction.logits);
  nn::softmax_channels(cache.prediction.logits, cache.prediction.probs);
}

template <typename T>
Prediction<T> UNet<T>::forward(const Tensor<T>& batch) const {
  check_input(batch);
  ForwardCache<T> cache;
  run_forward(batch, cache);
  return std::move(cache.prediction);
}

template <typename T>
TapCapture<T> UNet<T>::forward_with_taps(const Tensor<T>& batch) const {
  check_input(batch);
  auto cache = std::make_unique<ForwardCache<T>>();
  run_forward(batch, *cache);
  return TapCapture<T>(*this, std::move(cache));
}

// ---------------------------------------------------------------------------

template <typename T>
TapCapture<T>::TapCapture(const UNet<T>& model, std::unique_ptr<ForwardCache<T>> cache)
    : model_(&model), cache_(std::move(cache)) {}

template <typename T>
TapCapture<T>::TapCapture(TapCapture&&) noexcept = default;
template <typename T>
TapCapture<T>& TapCapture<T>::operator=(TapCapture&&) noexcept = default;
template <typename T>
TapCapture<T>::~TapCapture() = default;

template <typename T>
const Prediction<T>& TapCapture<T>::prediction() const {
  return cache_->prediction;
}

template <typename T>
const Tensor<T>& TapCapture<T>::activation(std::string_view tap) const {
  const int depth = model_->config().depth();
  for (int i = 0; i < depth; ++i) {
    if (tap == model_->tap_names()[i]) return cache_->encoders[i].out;
  }
  if (tap == "bottleneck") return cache_->bottleneck_out;
  for (int j = 0; j < depth; ++j) {
    if (tap == model_->tap_names()[depth + 1 + j]) return cache_->decoders[j].out;
  }
  fail(ErrorKind::kLookup, "unknown activation tap: " + std::string(tap));
}

template <typename T>
bool TapCapture<T>::has_gradient(std::string_view tap) const {
  return tap_grads_.find(tap) != tap_grads_.end();
}

template <typename T>
const Tensor<T>& TapCapture<T>::gradient(std::string_view tap) const {
  activation(tap);  // validates the name
  auto it = tap_grads_.find(tap);
  if (it == tap_grads_.end()) fail(ErrorKind::kLookup, "no gradient captured for tap " + std::string(tap));
  return it->second;
}

template <typename T>
void TapCapture<T>::backward(const Tensor<T>& grad_logits, std::vector<Tensor<T>>* param_grads,
                             std::optional<std::string_view> stop_at, bool record_taps) {
  if (stop_at) activation(*stop_at);
  const auto& c = *cache_;
  if (!grad_logits.same_shape(c.prediction.logits)) {
    fail(ErrorKind::kShape, "logit gradient " + shape_string(grad_logits.shape()) + " does not match logits " +
                                shape_string(c.prediction.logits.shape()));
  }
  const auto& params = model_->params_;
  if (param_grads && param_grads->size() != params.size()) {
    fail(ErrorKind::kShape, "parameter gradient list has the wrong length");
  }
  const int depth = model_->config().depth();
  const auto& names = model_->tap_names();
  tap_grads_.clear();

  GradTargets<T> targets(params, param_grads);
  const auto record = [&](int tap_index, const Tensor<T>& g) {
    if (record_taps) tap_grads_.insert_or_assign(names[tap_index], g);
    return stop_at && *stop_at == names[tap_index];
  };

  // Head: a plain 1x1 convolution (softmax is outside of logits).
  const auto& head = model_->head_;
  Tensor<T> grad;
  {
    auto [gw, gb] = targets.layer(head.weight, head.bias);
    nn::conv2d_backward(c.decoders[depth - 1].out, params[head.weight].value, grad_logits, &grad, gw, gb);
  }

  std::vector<Tensor<T>> skip_grads(depth);
  Tensor<T> grad_mid, grad_cat, grad_up;
  for (int j = depth - 1; j >= 0; --j) {
    if (record(depth + 1 + j, grad)) return;
    const auto& dec = c.decoders[j];
    const auto& ref = model_->decoders_[j];
    conv_relu_backward(dec.mid, dec.out, params, ref.conv2, grad, &grad_mid, targets);
    conv_relu_backward(dec.cat, dec.mid, params, ref.conv1, grad_mid, &grad_cat, targets);
    const int level = depth - 1 - j;
    nn::split_channels(grad_cat, c.encoders[level].out.channels(), skip_grads[level], grad_up);
    const Tensor<T>& up_in = j == 0 ? c.bottleneck_out : c.decoders[j - 1].out;
    auto [gw, gb] = targets.layer(ref.up.weight, ref.up.bias);
    nn::upconv2_backward(up_in, params[ref.up.weight].value, grad_up, grad, gw, gb);
  }

  if (record(depth, grad)) return;
  {
    const auto& ref = model_->bottleneck_;
    const Tensor<T>& in = c.encoders[depth - 1].pooled;
    conv_relu_backward(c.bottleneck_mid, c.bottleneck_out, params, ref.conv2, grad, &grad_mid, targets);
    conv_relu_backward(in, c.bottleneck_mid, params, ref.conv1, grad_mid, &grad, targets);
  }

  Tensor<T> grad_out;
  for (int i = depth - 1; i >= 0; --i) {
    const auto& enc = c.encoders[i];
    const auto& ref = model_->encoders_[i];
    nn::maxpool2_backward(grad, enc.argmax, grad_out);
    add_inplace(grad_out, skip_grads[i]);
    if (record(i, grad_out)) return;
    conv_relu_backward(enc.mid, enc.out, params, ref.conv2, grad_out, &grad_mid, targets);
    const Tensor<T>& in = i == 0 ? c.input : c.encoders[i - 1].pooled;
    conv_relu_backward(in, enc.mid, params, ref.conv1, grad_mid, i == 0 ? nullptr : &grad, targets);
  }
}

template class UNet<float>;
template class UNet<double>;
template class TapCapture<float>;
template class TapCapture<double>;

// ---------------------------------------------------------------------------

std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t kernel) {
  return kernel * kernel * in * out + out;
}

std::uint64_t conv_macs(std::uint64_t in, std::uint64_t out, std::uint64_t kernel, std::uint64_t height,
                        std::uint64_t width) {
  return kernel * kernel * in * out * height * width;
}

std::uint64_t count_params(const UNetConfig& config) {
  config.validate();
  const auto conv = conv_params;
  const std::uint64_t k = config.conv_kernel;
  std::uint64_t total = 0;
  std::uint64_t channels = config.in_channels;
  for (int w : config.encoder_widths) {
    total += conv(channels, w, k) + conv(w, w, k);
    channels = w;
  }
  total += conv(channels, config.bottleneck_width, k) + conv(config.bottleneck_width, config.bottleneck_width, k);
  channels = config.bottleneck_width;
  for (int j = config.depth() - 1; j >= 0; --j) {
    const std::uint64_t w = config.encoder_widths[j];
    total += channels * w * 4 + w;  // 2x2 up-convolution
    total += conv(2 * w, w, k) + conv(w, w, k);
    channels = w;
  }
  total += conv(channels, config.num_classes, 1);
  return total;
}

FlopReport count_flops(const UNetConfig& config, int height, int width) {
  config.validate();
  if (height % config.divisibility() != 0 || width % config.divisibility() != 0) {
    fail(ErrorKind::kShape, "input size must be divisible by " + std::to_string(config.divisibility()));
  }
  FlopReport r;
  const std::uint64_t k = config.conv_kernel;
  // Each conv: k*k*in*out MACs per output pixel, one bias add and one ReLU
  // per output element.
  const auto conv = [&](std::uint64_t in, std::uint64_t out, std::uint64_t pixels, bool relu) {
    r.macs += conv_macs(in, out, k, pixels, 1);
    r.elementwise += out * pixels * (relu ? 2 : 1);
  };
  std::uint64_t h = height, w = width;
  std::uint64_t channels = config.in_channels;
  for (int width_i : config.encoder_widths) {
    conv(channels, width_i, h * w, true);
    conv(width_i, width_i, h * w, true);
    h /= 2;
    w /= 2;
    r.elementwise += 3 * static_cast<std::uint64_t>(width_i) * h * w;  // 3 compares per pooled value
    channels = width_i;
  }
  conv(channels, config.bottleneck_width, h * w, true);
  conv(config.bottleneck_width, config.bottleneck_width, h * w, true);
  channels = config.bottleneck_width;
  for (int j = config.depth() - 1; j >= 0; --j) {
    const std::uint64_t out = config.encoder_widths[j];
    r.macs += channels * out * 4 * h * w;
    h *= 2;
    w *= 2;
    r.elementwise += out * h * w;  // bias
    conv(2 * out, out, h * w, true);
    conv(out, out, h * w, true);
    channels = out;
  }
  r.macs += conv_macs(channels, config.num_classes, 1, h, w);
  r.elementwise += static_cast<std::uint64_t>(config.num_classes) * h * w;
  // Softmax: subtract max, exp, accumulate, divide for every class.
  r.elementwise += 4 * static_cast<std::uint64_t>(config.num_classes) * h * w;
  r.flops = 2 * r.macs + r.elementwise;
  return r;
}

}  // namespace polypseg::model
