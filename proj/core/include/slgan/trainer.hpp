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
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slgan/blendshape.hpp"
#include "slgan/checkpoint.hpp"
#include "slgan/losses.hpp"
#include "slgan/steps.hpp"
#include "slgan/synth.hpp"

namespace slgan::train {

struct OptimizerConfig {
  std::string name = "adam";
  double step_size = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

/// Training configuration. Files use flat `key = value` lines; nested fields
/// are written `weights.lambda_adv = 30` or under a `[weights]` section.
struct TrainConfig {
  losses::LossWeights weights;
  int batch_size = 16;
  int epochs_paired = 5;
  int epochs_unpaired = 10;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  losses::AdversarialMode adversarial_mode = losses::AdversarialMode::kRaD;
  std::set<std::string> ablation;  ///< disabled terms, subset of {id, gen}
  int n_critic = 1;
  std::string preset = "mini";
  std::string dataset;
  std::string basis;
  std::string embedder = "projection";  ///< "projection" or a pretrained embedder file
  std::string eval_dataset;             ///< optional held-out manifest for per-epoch regression error
  int eval_samples = 200;
  int checkpoint_every = 0;  ///< in generator steps; 0 writes at epoch ends only
  int image_size = 0;        ///< 0 keeps the preset's size

  void validate() const;
  /// Canonical text with every field; parse(to_text()) == *this.
  std::string to_text() const;
  std::string hash() const;
  nn::NetworkPreset network_preset() const;

  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
};

/// Where a global step falls in the two-phase schedule.
struct StepPosition {
  losses::Phase phase = losses::Phase::kPaired;
  int epoch = 0;  ///< global epoch index, paired epochs first
  int batch = 0;  ///< batch index within the epoch
  bool last_in_epoch = false;
};

/// Raised when a loss or weight turns non-finite; the last checkpoint on disk
/// is left untouched.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

class Trainer {
 public:
  /// `eval` is optional held-out data for per-epoch regression error.
  Trainer(TrainConfig config, synth::Dataset data, BlendshapeBasis basis,
          std::unique_ptr<nn::Embedder<float>> embedder, std::optional<synth::Dataset> eval = std::nullopt);

  /// Loads dataset, basis, embedder and eval set named by the config and
  /// checks that the basis was built from this dataset.
  static Trainer from_config(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  std::int64_t step() const { return bundle_.meta.step; }
  std::int64_t total_steps() const;
  int batches_per_epoch(losses::Phase phase) const;
  StepPosition position(std::int64_t step) const;

  /// Runs the next generator step with its n_critic discriminator steps and
  /// returns their reports, discriminator first.
  std::vector<losses::LossReport> run_step();

  /// Held-out regression error of the current discriminator, or NaN when no
  /// evaluation set is configured.
  double heldout_regression_error() const;

  CheckpointBundle& bundle() { return bundle_; }
  const CheckpointBundle& bundle() const { return bundle_; }
  /// Replaces the training state; the bundle must match this configuration.
  void restore(CheckpointBundle bundle);

  /// The first line of every metrics log.
  std::string metrics_header() const;

 private:
  Batch<float> make_batch(std::int64_t step, int critic_iteration, const StepPosition& pos) const;

  TrainConfig config_;
  synth::Dataset data_;
  BlendshapeBasis basis_;
  std::optional<synth::Dataset> eval_;
  CheckpointBundle bundle_;
  StepOptions options_;
};

struct TrainResult {
  CheckpointBundle bundle;
  std::string checkpoint_path;
  std::string metrics_path;
};

/// Full run: writes `metrics.jsonl` and `checkpoint.slgan` under `out_dir`,
/// resuming from that checkpoint when `resume` is set and it exists. Calls
/// `progress` (if given) after every generator step.
TrainResult train(Trainer& trainer, const std::string& out_dir, bool resume = false,
                  const std::function<void(Trainer&, const std::vector<losses::LossReport>&)>& progress = {});

/// Convenience overload that builds the trainer from the config.
TrainResult train(const TrainConfig& config, const std::string& out_dir, bool resume = false);

struct AblationVariant {
  std::string name;  ///< full, no_id, no_gen or no_id_gen
  std::set<std::string> disabled;
};

std::vector<AblationVariant> ablation_variants(const std::vector<std::string>& names);

/// Held-out data and judge used to compare ablation variants.
struct AblationEval {
  const synth::Dataset* heldout = nullptr;
  const nn::Embedder<float>* judge = nullptr;  ///< identity embedder for the cosine metric
  int pairs = 100;
  std::uint64_t seed = 1;
};

struct AblationRow {
  std::string name;
  std::string checkpoint_path;
  double identity_cosine = 0.0;     ///< embedding cosine of transfers to their sources
  double consistency_error = 0.0;   ///< regression error of edited outputs vs their targets
  double transfer_ied = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  const AblationRow& row(const std::string& name) const;
  std::string to_json() const;
};

/// Trains every variant of `base` (same seed and schedule) under
/// `out_dir`/<name> and evaluates it on the held-out set.
AblationReport ablation_run(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                            const std::string& out_dir, const AblationEval& eval,
                            const std::function<void(const std::string&, const Trainer&)>& progress = {});

struct EmbedderTrainConfig {
  int epochs = 6;
  int batch_size = 32;
  double step_size = 1e-3;
  double scale = 16.0;  ///< cosine logit scale
  std::uint64_t seed = 1;
};

/// Fits the trained embedder backend by identity classification with
/// normalized embeddings and class weights (cosine-softmax).
std::unique_ptr<nn::Embedder<float>> pretrain_embedder(const synth::Dataset& data, const EmbedderTrainConfig& config,
                                                       const std::function<void(int, double)>& progress = {});

}  // namespace slgan::train
