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

#include <memory>
#include <string>
#include <vector>

#include "slgan/nn/params.hpp"
#include "slgan/nn/tensor.hpp"

namespace slgan::nn {

/// Intermediate values a forward pass keeps for its backward pass.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> acts;  ///< acts[0] = input, acts[i + 1] = output of layer i
  std::vector<Trace> children;
};

/// Stateless layer. Parameters live in an external flat buffer at offsets
/// fixed at construction, so one layer object serves any number of
/// concurrent weight sets.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const = 0;
  /// Accumulates parameter gradients into `grads` (skipped when null) and
  /// writes the input gradient to `dx` (skipped when null).
  virtual void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                        const Trace<T>* trace, Tensor<T>* dx, T* grads) const = 0;
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool bias = true;
};

/// Cross-correlation, weights laid out [out][in][ky][kx].
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(ParameterSet<T>& params, const std::string& name, ConvSpec spec);

  Shape output_shape(const Shape& in) const override;
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

  /// W * x without the bias: the convolution as a linear map.
  void linear_forward(const T* params, const Tensor<T>& x, Tensor<T>& y) const;
  /// Transposed map W^T * dy onto an input of shape `in`.
  void input_grad(const T* params, const Tensor<T>& dy, const Shape& in, Tensor<T>& dx) const;
  /// grads[W] += dy (x) x^T, grads[b] += sum(dy).
  void weight_grad(const Tensor<T>& x, const Tensor<T>& dy, T* grads, bool with_bias = true) const;

  const ConvSpec& spec() const { return spec_; }
  std::size_t weight_offset() const { return w_off_; }
  std::size_t bias_offset() const { return b_off_; }
  std::size_t fan_in() const { return static_cast<std::size_t>(spec_.in_channels) * spec_.kernel * spec_.kernel; }

 private:
  ConvSpec spec_;
  std::size_t w_off_ = 0;
  std::size_t b_off_ = 0;
};

/// Transposed convolution (the adjoint of Conv2d with the same spec, channel
/// roles swapped), weights laid out [in][out][ky][kx].
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(ParameterSet<T>& params, const std::string& name, ConvSpec spec);

  Shape output_shape(const Shape& in) const override;
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

  std::size_t weight_offset() const { return w_off_; }
  std::size_t fan_in() const { return static_cast<std::size_t>(spec_.in_channels) * spec_.kernel * spec_.kernel; }

 private:
  ConvSpec spec_;
  std::size_t w_off_ = 0;
  std::size_t b_off_ = 0;
};

/// Per-sample, per-channel normalization with learned scale and shift.
template <typename T>
class InstanceNorm final : public Layer<T> {
 public:
  InstanceNorm(ParameterSet<T>& params, const std::string& name, int channels, double eps = 1e-5);

  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

 private:
  int channels_;
  double eps_;
  std::size_t g_off_ = 0;
  std::size_t b_off_ = 0;
};

enum class Activation { kReLU, kLeakyReLU, kTanh, kSigmoid };

template <typename T>
class Pointwise final : public Layer<T> {
 public:
  explicit Pointwise(Activation kind, double slope = 0.01) : kind_(kind), slope_(static_cast<T>(slope)) {}

  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

 private:
  Activation kind_;
  T slope_;
};

/// Affine map of flattened samples: (n, in, 1, 1) -> (n, out, 1, 1).
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(ParameterSet<T>& params, const std::string& name, int in_features, int out_features);

  Shape output_shape(const Shape& in) const override;
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

  std::size_t weight_offset() const { return w_off_; }
  std::size_t bias_offset() const { return b_off_; }

 private:
  int in_;
  int out_;
  std::size_t w_off_ = 0;
  std::size_t b_off_ = 0;
};

/// Spatial mean per channel: (n, c, h, w) -> (n, c, 1, 1).
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Shape output_shape(const Shape& in) const override { return {in.n, in.c, 1, 1}; }
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;
};

/// Non-overlapping box average: (n, c, h, w) -> (n, c, h / f, w / f).
template <typename T>
class AvgPool final : public Layer<T> {
 public:
  explicit AvgPool(int factor) : factor_(factor) {}
  Shape output_shape(const Shape& in) const override;
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

 private:
  int factor_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  std::size_t size() const { return layers_.size(); }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

  Shape output_shape(const Shape& in) const override;
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// y = x + body(x).
template <typename T>
class Residual final : public Layer<T> {
 public:
  explicit Residual(Sequential<T> body) : body_(std::move(body)) {}

  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const override;
  void backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                const Trace<T>* trace, Tensor<T>* dx, T* grads) const override;

 private:
  Sequential<T> body_;
};

/// He-normal initialization of a weight range: std = gain * sqrt(2 / fan_in).
template <typename T>
void init_normal(std::span<T> values, double stddev, std::uint64_t seed);

}  // namespace slgan::nn
