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

#include "polypseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "polypseg/error.hpp"

namespace polypseg::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Unrolls one (C, H, W) image into a (C*k*k, H*W) matrix, zero padded.
template <typename T>
void im2col(const T* in, int channels, int height, int width, int kernel, T* col) {
  const int pad = kernel / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const T* src = in + c * plane;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * plane;
        const int dx = kx - pad;
        const int x_begin = std::max(0, -dx);
        const int x_end = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          T* row = dst + static_cast<std::size_t>(y) * width;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= height || x_begin >= x_end) {
            std::fill(row, row + width, T{0});
            continue;
          }
          std::fill(row, row + x_begin, T{0});
          std::memcpy(row + x_begin, src + static_cast<std::size_t>(sy) * width + x_begin + dx,
                      sizeof(T) * static_cast<std::size_t>(x_end - x_begin));
          std::fill(row + x_end, row + width, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kernel, T* out) {
  const int pad = kernel / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    T* dst = out + c * plane;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * plane;
        const int dx = kx - pad;
        const int x_begin = std::max(0, -dx);
        const int x_end = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= height) continue;
          const T* row = src + static_cast<std::size_t>(y) * width;
          T* target = dst + static_cast<std::size_t>(sy) * width + dx;
          for (int x = x_begin; x < x_end; ++x) target[x] += row[x];
        }
      }
    }
  }
}

template <typename T>
AlignedVector<T>& scratch() {
  thread_local AlignedVector<T> buffer;
  return buffer;
}

template <typename T>
void ensure_shape(Tensor<T>& t, int n, int c, int h, int w) {
  if (t.shape() != std::array<int, 4>{n, c, h, w}) t = Tensor<T>(n, c, h, w);
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out) {
  const int n_batch = in.batch(), cin = in.channels(), h = in.height(), w = in.width();
  const int cout = weight.batch(), k = weight.height();
  if (weight.channels() != cin) {
    fail(ErrorKind::kShape, "conv input has " + std::to_string(cin) + " channels, weight expects " +
                                std::to_string(weight.channels()));
  }
  ensure_shape(out, n_batch, cout, h, w);
  const std::size_t plane = in.plane();
  const std::size_t rows = static_cast<std::size_t>(cin) * k * k;
  ConstMapMat<T> wmat(weight.data(), cout, static_cast<Eigen::Index>(rows));

  auto& col = scratch<T>();
  if (k > 1) col.resize(rows * plane);
  for (int n = 0; n < n_batch; ++n) {
    const T* src = in.channel(n, 0);
    if (k > 1) {
      im2col(src, cin, h, w, k, col.data());
      src = col.data();
    }
    ConstMapMat<T> cmat(src, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(plane));
    MapMat<T> omat(out.channel(n, 0), cout, static_cast<Eigen::Index>(plane));
    omat.noalias() = wmat * cmat;
    for (int c = 0; c < cout; ++c) omat.row(c).array() += bias.data()[c];
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                     Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  const int n_batch = in.batch(), cin = in.channels(), h = in.height(), w = in.width();
  const int cout = weight.batch(), k = weight.height();
  const std::size_t plane = in.plane();
  const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(cin) * k * k);
  ConstMapMat<T> wmat(weight.data(), cout, rows);
  MapMat<T> gw(grad_weight.data(), cout, rows);
  if (grad_in != nullptr) {
    ensure_shape(*grad_in, n_batch, cin, h, w);
    grad_in->fill(T{0});
  }

  auto& col = scratch<T>();
  if (k > 1) col.resize(static_cast<std::size_t>(rows) * plane);
  RowMat<T> dcol;
  for (int n = 0; n < n_batch; ++n) {
    ConstMapMat<T> gout(grad_out.channel(n, 0), cout, static_cast<Eigen::Index>(plane));
    const T* src = in.channel(n, 0);
    if (k > 1) {
      im2col(src, cin, h, w, k, col.data());
      src = col.data();
    }
    ConstMapMat<T> cmat(src, rows, static_cast<Eigen::Index>(plane));
    gw.noalias() += gout * cmat.transpose();
    for (int c = 0; c < cout; ++c) grad_bias.data()[c] += gout.row(c).sum();

    if (grad_in != nullptr) {
      if (k > 1) {
        dcol.noalias() = wmat.transpose() * gout;
        col2im_add(dcol.data(), cin, h, w, k, grad_in->channel(n, 0));
      } else {
        MapMat<T> gin(grad_in->channel(n, 0), cin, static_cast<Eigen::Index>(plane));
        gin.noalias() = wmat.transpose() * gout;
      }
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& v : x.values()) v = v > T{0} ? v : T{0};
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& activated, Tensor<T>& grad) {
  const T* a = activated.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(a[i] > T{0})) g[i] = T{0};
  }
}

template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint8_t>& argmax) {
  const int n_batch = in.batch(), c_count = in.channels(), h = in.height(), w = in.width();
  if (h % 2 != 0 || w % 2 != 0) fail(ErrorKind::kShape, "max pooling needs even spatial size");
  const int oh = h / 2, ow = w / 2;
  ensure_shape(out, n_batch, c_count, oh, ow);
  argmax.resize(out.size());
  std::size_t idx = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < c_count; ++c) {
      const T* src = in.channel(n, c);
      T* dst = out.channel(n, c);
      for (int y = 0; y < oh; ++y) {
        const T* r0 = src + static_cast<std::size_t>(2 * y) * w;
        const T* r1 = r0 + w;
        for (int x = 0; x < ow; ++x, ++idx) {
          const T cand[4] = {r0[2 * x], r0[2 * x + 1], r1[2 * x], r1[2 * x + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t q = 1; q < 4; ++q) {
            if (cand[q] > cand[best]) best = q;
          }
          dst[static_cast<std::size_t>(y) * ow + x] = cand[best];
          argmax[idx] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& grad_out, const std::vector<std::uint8_t>& argmax, Tensor<T>& grad_in) {
  const int n_batch = grad_out.batch(), c_count = grad_out.channels(), oh = grad_out.height(), ow = grad_out.width();
  ensure_shape(grad_in, n_batch, c_count, oh * 2, ow * 2);
  grad_in.fill(T{0});
  const int w = ow * 2;
  std::size_t idx = 0;
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < c_count; ++c) {
      const T* g = grad_out.channel(n, c);
      T* dst = grad_in.channel(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++idx) {
          const int q = argmax[idx];
          dst[static_cast<std::size_t>(2 * y + q / 2) * w + 2 * x + q % 2] += g[static_cast<std::size_t>(y) * ow + x];
        }
      }
    }
  }
}

template <typename T>
void upconv2_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out) {
  const int n_batch = in.batch(), cin = in.channels(), h = in.height(), w = in.width();
  const int cout = weight.channels();
  if (weight.batch() != cin) fail(ErrorKind::kShape, "upconv input channel mismatch");
  ensure_shape(out, n_batch, cout, 2 * h, 2 * w);
  const auto plane = static_cast<Eigen::Index>(in.plane());
  ConstMapMat<T> wmat(weight.data(), cin, static_cast<Eigen::Index>(cout) * 4);
  RowMat<T> tmp;
  const int ow = 2 * w;
  for (int n = 0; n < n_batch; ++n) {
    ConstMapMat<T> imat(in.channel(n, 0), cin, plane);
    tmp.noalias() = wmat.transpose() * imat;
    for (int co = 0; co < cout; ++co) {
      T* dst = out.channel(n, co);
      const T b = bias.data()[co];
      for (int q = 0; q < 4; ++q) {
        const T* src = tmp.data() + static_cast<std::size_t>(co * 4 + q) * plane;
        const int dy = q / 2, dx = q % 2;
        for (int y = 0; y < h; ++y) {
          T* row = dst + static_cast<std::size_t>(2 * y + dy) * ow + dx;
          const T* s = src + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) row[2 * x] = s[x] + b;
        }
      }
    }
  }
}

template <typename T>
void upconv2_backward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& grad_out, Tensor<T>& grad_in,
                      Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  const int n_batch = in.batch(), cin = in.channels(), h = in.height(), w = in.width();
  const int cout = weight.channels();
  ensure_shape(grad_in, n_batch, cin, h, w);
  const auto plane = static_cast<Eigen::Index>(in.plane());
  ConstMapMat<T> wmat(weight.data(), cin, static_cast<Eigen::Index>(cout) * 4);
  MapMat<T> gw(grad_weight.data(), cin, static_cast<Eigen::Index>(cout) * 4);
  RowMat<T> dtmp(static_cast<Eigen::Index>(cout) * 4, plane);
  const int ow = 2 * w;
  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < cout; ++co) {
      const T* g = grad_out.channel(n, co);
      T sum = T{0};
      for (int q = 0; q < 4; ++q) {
        T* dst = dtmp.data() + static_cast<std::size_t>(co * 4 + q) * plane;
        const int dy = q / 2, dx = q % 2;
        for (int y = 0; y < h; ++y) {
          const T* row = g + static_cast<std::size_t>(2 * y + dy) * ow + dx;
          T* d = dst + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) {
            d[x] = row[2 * x];
            sum += row[2 * x];
          }
        }
      }
      grad_bias.data()[co] += sum;
    }
    ConstMapMat<T> imat(in.channel(n, 0), cin, plane);
    gw.noalias() += imat * dtmp.transpose();
    MapMat<T> gin(grad_in.channel(n, 0), cin, plane);
    gin.noalias() = wmat * dtmp;
  }
}

template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    fail(ErrorKind::kShape, "concat of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  ensure_shape(out, a.batch(), a.channels() + b.channels(), a.height(), a.width());
  const std::size_t a_len = a.plane() * a.channels(), b_len = b.plane() * b.channels();
  for (int n = 0; n < a.batch(); ++n) {
    std::copy_n(a.channel(n, 0), a_len, out.channel(n, 0));
    std::copy_n(b.channel(n, 0), b_len, out.channel(n, a.channels()));
  }
}

template <typename T>
void split_channels(const Tensor<T>& grad, int a_channels, Tensor<T>& grad_a, Tensor<T>& grad_b) {
  const int b_channels = grad.channels() - a_channels;
  ensure_shape(grad_a, grad.batch(), a_channels, grad.height(), grad.width());
  ensure_shape(grad_b, grad.batch(), b_channels, grad.height(), grad.width());
  for (int n = 0; n < grad.batch(); ++n) {
    std::copy_n(grad.channel(n, 0), grad.plane() * a_channels, grad_a.channel(n, 0));
    std::copy_n(grad.channel(n, a_channels), grad.plane() * b_channels, grad_b.channel(n, 0));
  }
}

template <typename T>
void softmax_channels(const Tensor<T>& logits, Tensor<T>& probs) {
  ensure_shape(probs, logits.batch(), logits.channels(), logits.height(), logits.width());
  const std::size_t plane = logits.plane();
  const int classes = logits.channels();
  for (int n = 0; n < logits.batch(); ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      T peak = logits.channel(n, 0)[p];
      for (int c = 1; c < classes; ++c) peak = std::max(peak, logits.channel(n, c)[p]);
      T total = T{0};
      for (int c = 0; c < classes; ++c) {
        const T e = std::exp(logits.channel(n, c)[p] - peak);
        probs.channel(n, c)[p] = e;
        total += e;
      }
      for (int c = 0; c < classes; ++c) probs.channel(n, c)[p] /= total;
    }
  }
}

template <typename T>
void softmax_channels_backward(const Tensor<T>& probs, const Tensor<T>& grad_probs, Tensor<T>& grad_logits) {
  ensure_shape(grad_logits, probs.batch(), probs.channels(), probs.height(), probs.width());
  const std::size_t plane = probs.plane();
  const int classes = probs.channels();
  for (int n = 0; n < probs.batch(); ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = T{0};
      for (int c = 0; c < classes; ++c) dot += probs.channel(n, c)[p] * grad_probs.channel(n, c)[p];
      for (int c = 0; c < classes; ++c) {
        grad_logits.channel(n, c)[p] = probs.channel(n, c)[p] * (grad_probs.channel(n, c)[p] - dot);
      }
    }
  }
}

#define POLYPSEG_INSTANTIATE_LAYERS(T)                                                                        \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&);           \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,          \
                                   Tensor<T>&, Tensor<T>&);                                                    \
  template void relu_inplace<T>(Tensor<T>&);                                                                   \
  template void relu_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);                                        \
  template void maxpool2_forward<T>(const Tensor<T>&, Tensor<T>&, std::vector<std::uint8_t>&);                 \
  template void maxpool2_backward<T>(const Tensor<T>&, const std::vector<std::uint8_t>&, Tensor<T>&);          \
  template void upconv2_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&);          \
  template void upconv2_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,         \
                                    Tensor<T>&, Tensor<T>&);                                                   \
  template void concat_channels<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                           \
  template void split_channels<T>(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);                              \
  template void softmax_channels<T>(const Tensor<T>&, Tensor<T>&);                                             \
  template void softmax_channels_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);

POLYPSEG_INSTANTIATE_LAYERS(float)
POLYPSEG_INSTANTIATE_LAYERS(double)

#undef POLYPSEG_INSTANTIATE_LAYERS

}  // namespace polypseg::nn
