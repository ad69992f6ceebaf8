// Copyright 2026 The slgan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "slgan/common.hpp"

namespace slgan::nn {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  int plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const { return fmt::format("({}, {}, {}, {})", n, c, h, w); }
};

/// Dense NCHW batch of feature maps.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T* sample(int i) { return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size(); }
  const T* sample(int i) const { return data_.data() + static_cast<std::size_t>(i) * shape_.sample_size(); }
  T* channel(int i, int ch) { return sample(i) + static_cast<std::size_t>(ch) * shape_.plane(); }
  const T* channel(int i, int ch) const { return sample(i) + static_cast<std::size_t>(ch) * shape_.plane(); }

  T& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * shape_.w + x]; }
  T at(int i, int ch, int y, int x) const { return channel(i, ch)[static_cast<std::size_t>(y) * shape_.w + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Copy of sample i as a batch of one.
  Tensor slice(int i) const { return slice(i, 1); }
  Tensor slice(int first, int count) const {
    check<ShapeError>(first >= 0 && count >= 0 && first + count <= shape_.n, "slice [{}, {}) out of range for batch {}",
                      first, first + count, shape_.n);
    Tensor out(Shape{count, shape_.c, shape_.h, shape_.w});
    std::copy_n(sample(first), out.size(), out.data());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& other) {
    check<ShapeError>(shape_ == other.shape_, "cannot add {} to {}", other.shape_.str(), shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Concatenate batches along the sample axis.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  check<ShapeError>(!parts.empty(), "cannot stack an empty list");
  Shape shape = parts.front().shape();
  shape.n = 0;
  for (const auto& p : parts) {
    check<ShapeError>(p.c() == shape.c && p.h() == shape.h && p.w() == shape.w, "stack shape mismatch: {} vs {}",
                      p.shape().str(), parts.front().shape().str());
    shape.n += p.n();
  }
  Tensor<T> out(shape);
  T* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

}  // namespace slgan::nn
