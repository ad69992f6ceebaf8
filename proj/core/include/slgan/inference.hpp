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

#include <memory>
#include <string>
#include <vector>

#include "slgan/blendshape.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/image.hpp"

namespace slgan {

struct EditResult {
  ImageTensor image;  ///< composited output, (n, 3, H, W)
  ImageTensor mask;   ///< (n, 1, H, W)
  Eigen::MatrixXd p_est;  ///< discriminator regression of the output, n x N
  bool resized = false;   ///< inputs were resampled to the model size
};

/// Immutable trained model shared by the CLI, the HTTP service and the
/// evaluator, so every surface runs the same arithmetic. All methods are
/// const and safe to call concurrently.
class InferenceModel {
 public:
  /// Rejects a basis whose hash differs from the one recorded at training
  /// time, or whose component count differs from the model's N.
  InferenceModel(CheckpointBundle bundle, BlendshapeBasis basis);

  static std::shared_ptr<const InferenceModel> load(const std::string& checkpoint_path, const std::string& basis_path);

  int num_params() const { return meta_.num_params; }
  int image_size() const { return meta_.preset.image_size; }
  const ModelMeta& meta() const { return meta_; }
  const BlendshapeBasis& basis() const { return basis_; }
  const nn::Embedder<float>* embedder() const { return embedder_.get(); }

  /// Resamples to the model size with bilinear interpolation when needed.
  ImageTensor prepare(const ImageTensor& images, bool* resized = nullptr) const;

  /// G(I, p) for a batch; `params` is n x N in normalized units.
  EditResult edit(const ImageTensor& images, const Eigen::MatrixXd& params) const;
  /// One image with one parameter vector.
  EditResult edit(const ImageTensor& image, const ParameterVector& params) const;

  /// Discriminator regression head, n x N.
  Eigen::MatrixXd regress(const ImageTensor& images) const;

  /// G(I_src, a * p_src + (1 - a) * p_trg) with both vectors regressed from
  /// the images; a = 0 is the full transfer, a = 1 reproduces the source.
  EditResult interpolate(const ImageTensor& source, const ImageTensor& target, double a) const;

  EditResult neutralize(const ImageTensor& images) const;

  /// Raw networks for evaluation code.
  const nn::Generator<float>& generator() const { return *generator_; }
  const nn::Discriminator<float>& discriminator() const { return *discriminator_; }

 private:
  void check_params(const Eigen::MatrixXd& params, int rows) const;

  ModelMeta meta_;
  BlendshapeBasis basis_;
  std::unique_ptr<nn::Generator<float>> generator_;
  std::unique_ptr<nn::Discriminator<float>> discriminator_;
  std::unique_ptr<nn::Embedder<float>> embedder_;
};

}  // namespace slgan
