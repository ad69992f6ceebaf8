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

#include "slgan/inference.hpp"

#include <algorithm>
#include <cmath>

namespace slgan {

namespace {

constexpr int kChunk = 16;

}  // namespace

InferenceModel::InferenceModel(CheckpointBundle bundle, BlendshapeBasis basis)
    : meta_(bundle.meta),
      basis_(std::move(basis)),
      generator_(std::move(bundle.generator)),
      discriminator_(std::move(bundle.discriminator)),
      embedder_(std::move(bundle.embedder)) {
  check(generator_ && discriminator_, "checkpoint has no networks");
  basis_.validate();
  const std::string hash = basis_hash(basis_);
  check(meta_.basis_hash == hash, "basis {} does not match the checkpoint's basis {}", hash, meta_.basis_hash);
  check<ShapeError>(basis_.num_components() == meta_.num_params, "basis has {} components, model expects {}",
                    basis_.num_components(), meta_.num_params);
}

std::shared_ptr<const InferenceModel> InferenceModel::load(const std::string& checkpoint_path,
                                                           const std::string& basis_path) {
  BlendshapeBasis basis = load_basis(basis_path);
  CheckpointBundle bundle = CheckpointBundle::load(checkpoint_path, basis_hash(basis));
  return std::make_shared<const InferenceModel>(std::move(bundle), std::move(basis));
}

ImageTensor InferenceModel::prepare(const ImageTensor& images, bool* resized) const {
  check<ShapeError>(images.c() == 3 && images.n() > 0, "expected RGB images, got {}", images.shape().str());
  const bool needs = images.h() != image_size() || images.w() != image_size();
  if (resized) *resized = needs;
  ImageTensor out = needs ? resize_bilinear(images, image_size(), image_size()) : images;
  for (auto& v : out.span()) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

void InferenceModel::check_params(const Eigen::MatrixXd& params, int rows) const {
  check<ShapeError>(params.cols() == num_params(), "parameter vector has length {}, model expects {}", params.cols(),
                    num_params());
  check<ShapeError>(params.rows() == rows, "{} parameter rows for {} images", params.rows(), rows);
  check(params.allFinite(), "parameters must be finite");
}

EditResult InferenceModel::edit(const ImageTensor& images, const Eigen::MatrixXd& params) const {
  check_params(params, images.n());
  EditResult result;
  const ImageTensor input = prepare(images, &result.resized);
  std::vector<ImageTensor> outs, masks;
  for (int first = 0; first < input.n(); first += kChunk) {
    const int count = std::min(kChunk, input.n() - first);
    const nn::ParamBatch<float> p = params.middleRows(first, count).cast<float>();
    auto out = generator_->forward(input.slice(first, count), p);
    outs.push_back(std::move(out.composited));
    masks.push_back(std::move(out.mask));
  }
  result.image = nn::stack(outs);
  result.mask = nn::stack(masks);
  result.p_est = regress(result.image);
  return result;
}

EditResult InferenceModel::edit(const ImageTensor& image, const ParameterVector& params) const {
  check<ShapeError>(image.n() == 1, "expected a single image, got a batch of {}", image.n());
  return edit(image, Eigen::MatrixXd(params.values.transpose()));
}

Eigen::MatrixXd InferenceModel::regress(const ImageTensor& images) const {
  const ImageTensor input = prepare(images);
  Eigen::MatrixXd out(input.n(), num_params());
  for (int first = 0; first < input.n(); first += kChunk) {
    const int count = std::min(kChunk, input.n() - first);
    const auto d = discriminator_->forward(input.slice(first, count));
    out.middleRows(first, count) = d.p_est.cast<double>();
  }
  return out;
}

EditResult InferenceModel::interpolate(const ImageTensor& source, const ImageTensor& target, double a) const {
  check(a >= 0.0 && a <= 1.0 && std::isfinite(a), "interpolation factor {} outside [0, 1]", a);
  check<ShapeError>(source.n() == target.n(), "{} sources for {} targets", source.n(), target.n());
  const Eigen::MatrixXd p_src = regress(source);
  const Eigen::MatrixXd p_trg = regress(target);
  return edit(source, (a * p_src + (1.0 - a) * p_trg).eval());
}

EditResult InferenceModel::neutralize(const ImageTensor& images) const {
  return edit(images, Eigen::MatrixXd::Zero(images.n(), num_params()));
}

}  // namespace slgan
