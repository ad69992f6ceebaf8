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
#include <string>
#include <utility>
#include <vector>

#include "slgan/image.hpp"
#include "slgan/inference.hpp"
#include "slgan/synth.hpp"

namespace slgan::eval {

struct IedOptions {
  double sigma = 1.0;       ///< spatial kernel width in pixels
  double truncation = 4.0;  ///< kernel radius, in units of sigma (rounded up)

  int radius() const;
};

/// Image Euclidean distance between two single images:
/// (1 / 2pi) sum_ij exp(-|P_i - P_j|^2 / (2 sigma^2)) <x_i - y_i, x_j - y_j>,
/// evaluated as <d, K * d> with a separable, truncated, unnormalized Gaussian.
double image_euclidean_distance(const ImageTensor& x, const ImageTensor& y, const IedOptions& options = {});

/// One distance per batch element.
std::vector<double> image_euclidean_distances(const ImageTensor& x, const ImageTensor& y,
                                              const IedOptions& options = {});

/// O((HW)^2) reference evaluation of the same sum. With `truncate` the pair
/// set is restricted to the kernel's square support.
double image_euclidean_distance_brute_force(const ImageTensor& x, const ImageTensor& y, const IedOptions& options,
                                            bool truncate);

/// Named metrics in insertion order.
struct EvalReport {
  std::vector<std::pair<std::string, double>> metrics;
  int samples = 0;
  int excluded = 0;
  std::string config_hash;

  void set(const std::string& name, double value);
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
  bool all_finite() const;
  std::string to_json() const;
};

struct RegressionStats {
  double mean_relative_error = 0.0;
  int count = 0;
  int excluded = 0;  ///< samples with ||p_true|| < 1e-6
};

/// (1/n) sum ||p_true - p_est|| / ||p_true|| over samples with ||p_true|| >= 1e-6.
RegressionStats relative_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

enum class RegressionMode { kVsTruth, kConsistency };
std::string to_string(RegressionMode mode);
RegressionMode regression_mode_from_string(const std::string& name);

/// Uniform targets in [-1, 1] used by the consistency mode, one row per image.
Eigen::MatrixXd draw_targets(int rows, int num_params, std::uint64_t seed);

/// vs_truth: the discriminator's regression of the images against their
/// labels. consistency: edit every image with a drawn target, re-regress the
/// output and compare against the target.
EvalReport regression_error_report(const InferenceModel& model, const ImageTensor& images,
                                   const Eigen::MatrixXd& labels, RegressionMode mode, std::uint64_t seed);

/// Ground-truth render of a manifest record's identity with the given
/// (normalized) parameters, on the 8-bit grid of the dataset images.
ImageTensor ground_truth_render(const synth::Manifest& manifest, int record, const Eigen::VectorXd& params);

struct TransferPair {
  int source = 0;
  int target = 0;
};

/// Source/target record pairs with different identities and expressive
/// targets, chosen from `seed`.
std::vector<TransferPair> choose_pairs(const synth::Dataset& data, int count, std::uint64_t seed);

struct TransferOutput {
  EvalReport report;
  std::vector<ImageTensor> strips;  ///< per pair: source, 5-step interpolation (a = 0 .. 1), target
};

inline constexpr int kStripSteps = 5;

/// Regresses p_trg from each target image, generates G(I_src, p_trg) and
/// reports its IED to the ground-truth render of (source identity, target
/// labels), next to the IED of the unedited source to that render.
TransferOutput transfer_harness(const InferenceModel& model, const synth::Dataset& data,
                                const std::vector<TransferPair>& pairs, bool with_strips = false,
                                const IedOptions& ied = {});

/// IED of G(I, D_p(I)) to the ground-truth render of the record itself.
double self_transfer_ied(const InferenceModel& model, const synth::Dataset& data, int record,
                         const IedOptions& ied = {});

struct NeutralizeOutput {
  EvalReport report;
  std::vector<ImageTensor> outputs;
};

/// G(I, 0) against the identity's neutral render, for the given records.
NeutralizeOutput neutralize(const InferenceModel& model, const synth::Dataset& data, const std::vector<int>& records,
                            const IedOptions& ied = {});

/// Records carrying a nonzero expression, in order, at most `count`.
std::vector<int> expressive_records(const synth::Dataset& data, int count);
std::vector<int> neutral_records(const synth::Dataset& data, int count);

/// Mean cosine between the embeddings of transferred outputs and of their
/// sources.
double identity_cosine(const InferenceModel& model, const nn::Embedder<float>& embedder, const synth::Dataset& data,
                       const std::vector<TransferPair>& pairs);

/// Mean cosine similarity between embeddings of same-identity and of
/// different-identity record pairs.
std::pair<double, double> embedding_separation(const nn::Embedder<float>& embedder, const synth::Dataset& data,
                                               int pairs, std::uint64_t seed);

}  // namespace slgan::eval
