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
#include <map>
#include <memory>
#include <string>

#include "slgan/archive.hpp"
#include "slgan/nn/networks.hpp"

namespace slgan {

/// Identity of a trained model: everything needed to rebuild its networks and
/// to check it against a basis file.
struct ModelMeta {
  nn::NetworkPreset preset;
  int num_params = 0;
  std::string basis_hash;
  std::string basis_kind = "expression";
  std::string config_hash;
  std::string adversarial_mode = "rad";
  std::int64_t step = 0;

  std::map<std::string, std::string> to_fields() const;
  static ModelMeta from_fields(const std::map<std::string, std::string>& fields);
};

/// Networks plus optimizer state. Resuming from a saved bundle continues
/// training bit-identically: weights and moments are stored in the float32
/// they are trained in.
struct CheckpointBundle {
  static constexpr int kVersion = 1;

  ModelMeta meta;
  std::unique_ptr<nn::Generator<float>> generator;
  std::unique_ptr<nn::Discriminator<float>> discriminator;
  std::unique_ptr<nn::Embedder<float>> embedder;  ///< identity embedder used for training, if any
  nn::Adam<float> adam_g;
  nn::Adam<float> adam_d;

  /// Fresh networks initialized from `seed`.
  static CheckpointBundle initialize(const ModelMeta& meta, std::uint64_t seed, const nn::AdamOptions& adam);

  Archive to_archive() const;
  static CheckpointBundle from_archive(const Archive& archive);

  /// Writes through a temporary file and a rename, so a reader never sees a
  /// partially written checkpoint.
  void save(const std::string& path) const;
  /// When `expected_basis_hash` is not empty, a checkpoint trained against a
  /// different basis is rejected.
  static CheckpointBundle load(const std::string& path, const std::string& expected_basis_hash = "");
};

void save_embedder(const nn::Embedder<float>& embedder, Archive& archive, const std::string& prefix);
std::unique_ptr<nn::Embedder<float>> load_embedder(const Archive& archive, const std::string& prefix);

void save_embedder_file(const nn::Embedder<float>& embedder, const std::string& path);
std::unique_ptr<nn::Embedder<float>> load_embedder_file(const std::string& path);

/// Writes `bytes` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace slgan
