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

// U-Net encoder/decoder with skip connections.
//
//   encoder.i    : conv3x3+ReLU, conv3x3+ReLU            (tap, skip source)
//                  maxpool 2x2
//   bottleneck   : conv3x3+ReLU, conv3x3+ReLU            (tap)
//   decoder.j    : upconv 2x2/2, concat[skip, up],
//                  conv3x3+ReLU, conv3x3+ReLU            (tap)
//   head         : conv1x1 -> logits, softmax -> probs
//
// decoder.j runs at the resolution of encoder.(depth-1-j), so the last
// decoder tap, decoder.(depth-1), sits right before the head.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polypseg/tensor.hpp"

namespace polypseg::model {

struct UNetConfig {
  int in_channels = 3;
  int num_classes = 2;
  std::vector<int> encoder_widths{64, 128, 256, 512};
  int bottleneck_width = 1024;
  int conv_kernel = 3;
  int pool_factor = 2;
  std::uint64_t seed = 0;

  int depth() const { return static_cast<int>(encoder_widths.size()); }
  /// Input side must be a multiple of this.
  int divisibility() const;
  /// Throws Error{kConfig} describing the first violated invariant.
  void validate() const;

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

/// Softmax probabilities and raw logits, both (batch, classes, H, W).
template <typename T>
struct Prediction {
  Tensor<T> logits;
  Tensor<T> probs;
};

template <typename T>
class UNet;

/// Activations retained by one forward pass. Owned by the caller, so
/// concurrent forward passes on one model never share state.
template <typename T>
struct ForwardCache;

/// Result of forward_with_taps: the prediction, all tap activations, and a
/// backward entry point that fills tap (and optionally parameter) gradients.
template <typename T>
class TapCapture {
 public:
  TapCapture(const UNet<T>& model, std::unique_ptr<ForwardCache<T>> cache);
  TapCapture(TapCapture&&) noexcept;
  TapCapture& operator=(TapCapture&&) noexcept;
  ~TapCapture();

  const Prediction<T>& prediction() const;

  /// Throws Error{kLookup} for unknown tap names.
  const Tensor<T>& activation(std::string_view tap) const;

  /// Backpropagates d(scalar)/d(logits). When `param_grads` is non-null the
  /// parameter gradients are accumulated into it (same order as
  /// UNet::parameters()). With `stop_at` set, propagation ends as soon as
  /// that tap's gradient is complete. Training passes record_taps = false
  /// to skip copying tap gradients.
  void backward(const Tensor<T>& grad_logits, std::vector<Tensor<T>>* param_grads = nullptr,
                std::optional<std::string_view> stop_at = std::nullopt, bool record_taps = true);

  /// Available after backward() has reached the tap; kLookup otherwise.
  const Tensor<T>& gradient(std::string_view tap) const;
  bool has_gradient(std::string_view tap) const;

 private:
  const UNet<T>* model_;
  std::unique_ptr<ForwardCache<T>> cache_;
  std::map<std::string, Tensor<T>, std::less<>> tap_grads_;
};

struct FlopReport {
  std::uint64_t macs = 0;         // multiply-accumulates in conv/upconv layers
  std::uint64_t elementwise = 0;  // bias adds, ReLU, pooling compares, softmax
  std::uint64_t flops = 0;        // 2 * macs + elementwise
};

template <typename T>
class UNet {
 public:
  /// Validates the config and initializes weights with a seeded He-normal
  /// scheme (std = sqrt(2 / fan_in)); biases start at zero.
  explicit UNet(UNetConfig config);

  const UNetConfig& config() const { return config_; }

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(std::string_view name);
  const Parameter<T>& parameter(std::string_view name) const;

  /// Zero tensors matching every parameter, for gradient accumulation.
  std::vector<Tensor<T>> zero_gradients() const;

  /// encoder.0 .. encoder.(d-1), bottleneck, decoder.0 .. decoder.(d-1).
  const std::vector<std::string>& tap_names() const { return tap_names_; }
  const std::string& last_decoder_tap() const { return tap_names_.back(); }

  /// Throws Error{kShape} when the input is not (B, in_channels, S, S) with
  /// S divisible by config().divisibility().
  Prediction<T> forward(const Tensor<T>& batch) const;
  TapCapture<T> forward_with_taps(const Tensor<T>& batch) const;

  /// Re-draws the weights of every parameter whose name starts with
  /// `prefix` from the He-normal scheme using `seed`.
  void reinitialize(std::string_view prefix, std::uint64_t seed);

  // Structural indices into parameters(); each conv stores weight then bias.
  struct ConvRef {
    int weight = -1;
    int bias = -1;
  };
  struct EncoderRef {
    ConvRef conv1, conv2;
  };
  struct DecoderRef {
    ConvRef up, conv1, conv2;
  };
  const std::vector<EncoderRef>& encoder_refs() const { return encoders_; }
  const EncoderRef& bottleneck_ref() const { return bottleneck_; }
  const std::vector<DecoderRef>& decoder_refs() const { return decoders_; }
  const ConvRef& head_ref() const { return head_; }

 private:
  friend class TapCapture<T>;

  void check_input(const Tensor<T>& batch) const;
  void run_forward(const Tensor<T>& batch, ForwardCache<T>& cache) const;
  ConvRef add_conv(const std::string& name, int in, int out, int kernel);
  ConvRef add_upconv(const std::string& name, int in, int out);
  void init_parameter(Parameter<T>& param, std::uint64_t seed, std::size_t index);

  UNetConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<std::string> tap_names_;
  std::vector<EncoderRef> encoders_;
  EncoderRef bottleneck_;
  std::vector<DecoderRef> decoders_;
  ConvRef head_;
};

extern template class UNet<float>;
extern template class UNet<double>;
extern template class TapCapture<float>;
extern template class TapCapture<double>;

/// One convolution with bias: k*k*in*out + out.
std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t kernel);
/// Same-padded, stride-1 convolution producing h x w outputs: k*k*in*out*h*w.
std::uint64_t conv_macs(std::uint64_t in, std::uint64_t out, std::uint64_t kernel, std::uint64_t height,
                        std::uint64_t width);

/// Sum of parameter tensor sizes; a pure function of the config.
std::uint64_t count_params(const UNetConfig& config);
template <typename T>
std::uint64_t count_params(const UNet<T>& model) {
  std::uint64_t total = 0;
  for (const auto& p : model.parameters()) total += p.value.size();
  return total;
}

/// Analytic operation count for one forward pass of a single image.
FlopReport count_flops(const UNetConfig& config, int height, int width);

/// Converts parameters between precisions; the structure is shared.
template <typename To, typename From>
UNet<To> convert_model(const UNet<From>& model) {
  UNet<To> out(model.config());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& src = model.parameters()[i].value;
    auto& dst = out.parameters()[i].value;
    for (std::size_t k = 0; k < src.size(); ++k) dst.data()[k] = static_cast<To>(src.data()[k]);
  }
  return out;
}

}  // namespace polypseg::model
