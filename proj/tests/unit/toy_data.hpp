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

#include <string>

#include "slgan/blendshape.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/synth.hpp"
#include "slgan/trainer.hpp"
#include "test_util.hpp"

namespace slgan::testing {

/// A small rendered dataset on disk with a matching synthetic-mode basis.
struct ToyData {
  explicit ToyData(const std::string& tag, int identities = 4, int per_identity = 8, int size = 32, int num_params = 4,
                   std::uint64_t seed = 5)
      : dir(tag) {
    synth::DatasetConfig cfg;
    cfg.n_identities = identities;
    cfg.per_identity = per_identity;
    cfg.height = size;
    cfg.width = size;
    cfg.num_params = num_params;
    cfg.seed = seed;
    cfg.paired_fraction = 0.5;
    synth::generate_dataset(cfg, dir.file("data"));
    manifest_path = dir.file("data/manifest.jsonl");
    data = synth::load_dataset(manifest_path);
    basis = synth::synthetic_mode_basis(num_params);
    basis.dataset_hash = data.manifest.hash();
    basis_path = dir.file("basis.slgan");
    save_basis(basis, basis_path);
  }

  train::TrainConfig config() const {
    train::TrainConfig c;
    c.preset = "tiny";
    c.image_size = data.images.h();
    c.batch_size = 4;
    c.epochs_paired = 1;
    c.epochs_unpaired = 1;
    c.dataset = manifest_path;
    c.basis = basis_path;
    c.eval_dataset = manifest_path;
    c.eval_samples = 8;
    return c;
  }

  /// Untrained model bound to this basis.
  CheckpointBundle fresh_bundle(std::uint64_t seed = 3) const {
    ModelMeta meta;
    meta.preset = nn::NetworkPreset::tiny();
    meta.preset.image_size = data.images.h();
    meta.num_params = data.num_params();
    meta.basis_hash = basis_hash(basis);
    return CheckpointBundle::initialize(meta, seed, nn::AdamOptions{1e-4, 0.5, 0.999, 1e-8});
  }

  TempDir dir;
  std::string manifest_path;
  std::string basis_path;
  synth::Dataset data;
  BlendshapeBasis basis;
};

}  // namespace slgan::testing
