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

// Forward/backward kernels for the handful of layer types a U-Net needs.
// All tensors are NCHW. Instantiated for float and double.

#pragma once

#include <cstdint>
#include <vector>

#include "polypseg/tensor.hpp"

namespace polypseg::nn {

/// Same-padded, stride-1 convolution. `weight` is (out, in, k, k), `bias` is
/// (1, out, 1, 1). `out` is resized as needed.
template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out);

/// Accumulates into grad_weight / grad_bias. `grad_in` may be null when the
/// input gradient is not needed (first layer).
template <typename T>
void conv2d_backward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, Tensor<T>& grad_weight, Tensor<T>& grad_bias);

template <typename T>
void relu_inplace(Tensor<T>& x);

/// grad *= (activated > 0)
template <typename T>
void relu_backward_inplace(const Tensor<T>& activated, Tensor<T>& grad);

/// 2x2 max pooling with stride 2. `argmax` stores the winning offset
/// (0..3, row-major within the window; first maximum wins).
template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint8_t>& argmax);

template <typename T>
void maxpool2_backward(const Tensor<T>& grad_out, const std::vector<std::uint8_t>& argmax,
                       Tensor<T>& grad_in);

/// 2x2 stride-2 transposed convolution. `weight` is (in, out, 2, 2).
template <typename T>
void upconv2_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out);

template <typename T>
void upconv2_backward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& grad_out,
                      Tensor<T>& grad_in, Tensor<T>& grad_weight, Tensor<T>& grad_bias);

/// Channel concatenation [a, b] and its inverse for gradients.
template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out);

template <typename T>
void split_channels(const Tensor<T>& grad, int a_channels, Tensor<T>& grad_a, Tensor<T>& grad_b);

/// Softmax over the channel axis.
template <typename T>
void softmax_channels(const Tensor<T>& logits, Tensor<T>& probs);

/// Given d(loss)/d(probs), returns d(loss)/d(logits).
template <typename T>
void softmax_channels_backward(const Tensor<T>& probs, const Tensor<T>& grad_probs, Tensor<T>& grad_logits);

}  // namespace polypseg::nn
