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

#include <algorithm>
#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace polypseg {

/// 64-byte aligned allocation. Eigen's vectorized kernels peel unaligned
/// heads, so buffer alignment would otherwise leak into summation order.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Batch of feature maps in (batch, channel, row, column) order.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : shape_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int batch() const { return shape_[0]; }
  int channels() const { return shape_[1]; }
  int height() const { return shape_[2]; }
  int width() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  /// Pointer to channel `c` of batch item `n`.
  T* channel(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * plane(); }
  const T* channel(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * plane();
  }

  T& at(int n, int c, int y, int x) { return channel(n, c)[static_cast<std::size_t>(y) * shape_[3] + x]; }
  const T& at(int n, int c, int y, int x) const {
    return channel(n, c)[static_cast<std::size_t>(y) * shape_[3] + x];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::array<int, 4> shape_{0, 0, 0, 0};
  AlignedVector<T> data_;
};

std::string shape_string(const std::array<int, 4>& shape);

}  // namespace polypseg
