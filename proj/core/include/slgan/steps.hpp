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

#include <cstdint>
#include <optional>

#include "slgan/losses.hpp"
#include "slgan/nn/networks.hpp"

namespace slgan::train {

using nn::ParamBatch;
using nn::Tensor;

template <typename T>
struct Batch {
  Tensor<T> images;                      ///< I_org
  ParamBatch<T> params;                  ///< p_org
  ParamBatch<T> targets;                 ///< p_trg
  std::optional<Tensor<T>> target_images;  ///< I_trg, paired phase only

  int size() const { return images.n(); }
};

struct StepOptions {
  losses::LossWeights weights;
  losses::AdversarialMode mode = losses::AdversarialMode::kRaD;
  losses::Phase phase = losses::Phase::kUnpaired;
  bool use_id = true;
  bool use_gen = true;
};

/// Generator loss for one batch. Generates I_gen = G(I_org, p_trg), cycles
/// I_rec = G(I_gen, p_org), scores I_gen with the discriminator and adds the
/// weighted generator terms. When `grads` is not null the gradient with
/// respect to the generator weights is accumulated into it.
template <typename T>
losses::LossReport generator_objective(const nn::Generator<T>& g, const nn::Discriminator<T>& d,
                                       const nn::Embedder<T>* embedder, const Batch<T>& batch,
                                       const StepOptions& options, T* grads);

/// Discriminator loss for one batch: the adversarial loss on real images and
/// detached generations, the penalty at per-sample interpolates drawn from
/// `gp_seed`, and the regression loss on real images.
template <typename T>
losses::LossReport discriminator_objective(const nn::Generator<T>& g, const nn::Discriminator<T>& d,
                                           const Batch<T>& batch, const StepOptions& options, std::uint64_t gp_seed,
                                           T* grads);

}  // namespace slgan::train
