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

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "slgan/nn/layers.hpp"

namespace slgan::nn {

/// Architecture sizes. "mini" is the desk-scale preset; "full" follows the
/// full-size CycleGAN / PatchGAN layout at 128x128.
struct NetworkPreset {
  std::string name = "mini";
  int gen_width = 16;
  int gen_downsamples = 2;
  int gen_residual_blocks = 2;
  int disc_width = 16;
  int disc_layers = 4;
  int image_size = 64;

  static NetworkPreset mini();
  static NetworkPreset full();
  /// Smoke-test scale, 32x32.
  static NetworkPreset tiny();
  static NetworkPreset from_name(const std::string& name);
};

/// Rows are samples, columns parameters.
template <typename T>
using ParamBatch = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct GeneratorOutput {
  Tensor<T> mask;         ///< (n, 1, h, w) in [0, 1]
  Tensor<T> image;        ///< (n, 3, h, w) in (-1, 1)
  Tensor<T> composited;   ///< mask * image + (1 - mask) * input
};

template <typename T>
struct GeneratorTrace {
  Tensor<T> input;  ///< the RGB input
  Trace<T> trunk;
  Trace<T> image_head;
  Trace<T> mask_head;
  Tensor<T> features;
};

/// Attention-masked image-to-image generator conditioned on a parameter
/// vector tiled into constant input channels.
template <typename T>
class Generator {
 public:
  Generator(const NetworkPreset& preset, int num_params, std::uint64_t seed);

  GeneratorOutput<T> forward(const Tensor<T>& image, const ParamBatch<T>& params,
                             GeneratorTrace<T>* trace = nullptr) const;

  /// Backpropagates gradients of the composited image and (optionally) of the
  /// mask. Parameter gradients accumulate into `grads`; the gradient with
  /// respect to the RGB input goes to `d_image`. Either may be null.
  void backward(const GeneratorTrace<T>& trace, const GeneratorOutput<T>& out, const Tensor<T>& d_composited,
                const Tensor<T>* d_mask, T* grads, Tensor<T>* d_image) const;

  int num_params() const { return num_params_; }
  const NetworkPreset& preset() const { return preset_; }
  ParameterSet<T>& weights() { return weights_; }
  const ParameterSet<T>& weights() const { return weights_; }

  /// Overwrites the head biases so the mask is the constant sigmoid(logit)
  /// with zero head weights. Used to pin the compositing path in tests.
  void pin_mask(T logit);

 private:
  Tensor<T> conditioned_input(const Tensor<T>& image, const ParamBatch<T>& params) const;

  NetworkPreset preset_;
  int num_params_;
  ParameterSet<T> weights_;
  Sequential<T> trunk_;
  Sequential<T> image_head_;
  Sequential<T> mask_head_;
};

template <typename T>
struct DiscriminatorOutput {
  Tensor<T> critic_map;  ///< (n, 1, h', w') raw patch scores
  ParamBatch<T> p_est;   ///< (n, N)

  /// Per-image critic value: the mean patch score.
  std::vector<T> critic_means() const;
};

template <typename T>
struct DiscriminatorTrace {
  std::vector<Tensor<T>> acts;  ///< acts[0] = input, acts[l + 1] = activation after trunk layer l
  Tensor<T> pooled;
};

/// Strided convolution trunk with LeakyReLU, a 3x3 critic head emitting a
/// patch score map, and a parallel regression head (global average pool and
/// an affine map).
template <typename T>
class Discriminator {
 public:
  Discriminator(const NetworkPreset& preset, int num_params, std::uint64_t seed);

  DiscriminatorOutput<T> forward(const Tensor<T>& image, DiscriminatorTrace<T>* trace = nullptr) const;

  void backward(const DiscriminatorTrace<T>& trace, const Tensor<T>* d_critic_map, const ParamBatch<T>* d_p_est,
                T* grads, Tensor<T>* d_image) const;

  /// Gradient of each image's mean critic with respect to its pixels.
  Tensor<T> critic_input_gradient(const Tensor<T>& image) const;

  /// Batch mean of (||grad_x mean_critic(x)||_2 - 1)^2. When `grads` is not
  /// null, adds `weight` times the penalty's gradient with respect to the
  /// weights, obtained by pushing the penalty direction forward through the
  /// linearized network (LeakyReLU is piecewise linear, so the masks are
  /// locally constant).
  T gradient_penalty(const Tensor<T>& image, T weight, T* grads) const;

  int num_params() const { return num_params_; }
  const NetworkPreset& preset() const { return preset_; }
  ParameterSet<T>& weights() { return weights_; }
  const ParameterSet<T>& weights() const { return weights_; }

 private:
  NetworkPreset preset_;
  int num_params_;
  T slope_ = T(0.01);
  ParameterSet<T> weights_;
  std::vector<Conv2d<T>> trunk_;
  std::unique_ptr<Conv2d<T>> critic_;
  std::unique_ptr<Dense<T>> regressor_;
};

enum class EmbedderKind { kProjection, kTrained };
std::string to_string(EmbedderKind kind);
EmbedderKind embedder_kind_from_string(const std::string& name);

/// Identity embedding network. The projection backend is a fixed seeded
/// random affine map of 4x4-average-pooled pixels; the trained backend is a
/// small convolutional encoder fitted by identity classification.
template <typename T>
class Embedder {
 public:
  static constexpr int kDim = 64;

  Embedder(EmbedderKind kind, int image_size, std::uint64_t seed);

  /// (n, kDim, 1, 1).
  Tensor<T> forward(const Tensor<T>& image, Trace<T>* trace = nullptr) const;
  void backward(const Trace<T>& trace, const Tensor<T>& d_embedding, T* grads, Tensor<T>* d_image) const;

  EmbedderKind kind() const { return kind_; }
  int image_size() const { return image_size_; }
  ParameterSet<T>& weights() { return weights_; }
  const ParameterSet<T>& weights() const { return weights_; }

 private:
  EmbedderKind kind_;
  int image_size_;
  ParameterSet<T> weights_;
  Sequential<T> net_;
};

/// Tiles a parameter batch into constant planes.
template <typename T>
Tensor<T> tile_params(const ParamBatch<T>& params, int height, int width);

}  // namespace slgan::nn
