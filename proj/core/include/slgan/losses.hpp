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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slgan/nn/networks.hpp"

namespace slgan::losses {

using nn::ParamBatch;
using nn::Tensor;

struct LossWeights {
  double adv = 30.0;
  double exp = 1000.0;
  double rec = 10.0;
  double gen = 10.0;
  double id = 4.0;
  double att = 0.3;
  double gp = 10.0;

  /// Throws DomainError unless every weight is finite and nonnegative.
  void validate() const;
};

enum class AdversarialMode { kRaD, kWGP };
enum class Phase { kPaired, kUnpaired };

std::string to_string(AdversarialMode mode);
std::string to_string(Phase phase);
AdversarialMode adversarial_mode_from_string(const std::string& name);

double sigmoid(double x);

/// sigma(critic - opposite_mean): the relativistic average activation. Real
/// and fake branches share the formula; only the opposite class differs.
double rad_activation(double critic, double opposite_mean);
std::vector<double> rad_activation(std::span<const double> critic, double opposite_mean);

struct AdversarialObjective {
  double value = 0.0;
  std::vector<double> d_real;  ///< d value / d real critic
  std::vector<double> d_fake;  ///< d value / d fake critic
};

/// E[D(real)] - E[D(fake)] without the penalty. For kRaD, D is the
/// relativistic sigmoid against the opposite batch mean; for kWGP, D is the
/// raw critic value.
AdversarialObjective adversarial_objective(std::span<const double> real, std::span<const double> fake,
                                           AdversarialMode mode = AdversarialMode::kRaD);

/// adversarial_objective - lambda_gp * gp_term.
double adversarial_loss(std::span<const double> real, std::span<const double> fake, double gp_term,
                        const LossWeights& w, AdversarialMode mode = AdversarialMode::kRaD);

/// Batch mean of (||critic_gradient(x)_i||_2 - 1)^2 where critic_gradient
/// returns, per sample, the gradient of that sample's critic value.
template <typename T>
double gradient_penalty(const Tensor<T>& points, const std::function<Tensor<T>(const Tensor<T>&)>& critic_gradient);

/// Per-sample uniform interpolates alpha * real + (1 - alpha) * fake.
template <typename T>
Tensor<T> interpolate_batch(const Tensor<T>& real, const Tensor<T>& fake, std::uint64_t seed,
                            std::vector<double>* alphas = nullptr);

/// (1/N) ||est - target||^2 for one vector.
double expression_loss(const Eigen::VectorXd& est, const Eigen::VectorXd& target);

/// Batch mean of the per-row expression loss; optionally its gradient with
/// respect to `est`.
template <typename T>
double expression_loss(const ParamBatch<T>& est, const ParamBatch<T>& target, ParamBatch<T>* d_est = nullptr);

/// Batch mean of sum|a - b| / (W * H) (channels summed); the gradient is
/// taken with respect to `b`.
template <typename T>
double l1_image_loss(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* d_b = nullptr);

template <typename T>
double reconstruction_loss(const Tensor<T>& original, const Tensor<T>& reconstructed, Tensor<T>* d_rec = nullptr);

/// Throws DomainError in the unpaired phase.
template <typename T>
double generation_loss(const Tensor<T>& target, const Tensor<T>& generated, Phase phase,
                       Tensor<T>* d_gen = nullptr);

/// Batch mean of 1 - cos(e_gen_i, e_org_i); embeddings are (n, d, 1, 1).
template <typename T>
double identity_loss(const Tensor<T>& e_gen, const Tensor<T>& e_org, Tensor<T>* d_gen = nullptr);

/// Batch mean of (||m_gen||_1 + ||m_rec||_1) / (W * H).
template <typename T>
double attention_loss(const Tensor<T>& mask_gen, const Tensor<T>& mask_rec, Tensor<T>* d_gen = nullptr,
                      Tensor<T>* d_rec = nullptr);

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
};

/// One optimizer step's losses. `total` is the weighted sum of `terms` in
/// list order; `extras` are diagnostics outside the sum.
struct LossReport {
  std::string network;  ///< "generator" or "discriminator"
  Phase phase = Phase::kUnpaired;
  std::int64_t step = 0;
  std::vector<LossTerm> terms;
  std::vector<std::pair<std::string, double>> extras;
  double total = 0.0;

  const LossTerm* find(const std::string& name) const;
  double weighted_sum() const;
  bool all_finite() const;
  /// Single-line JSON with a fixed key order.
  std::string to_json() const;
};

struct GeneratorTerms {
  double adv = 0.0;
  double exp = 0.0;
  double rec = 0.0;
  std::optional<double> gen;
  std::optional<double> id;
  double att = 0.0;
};

/// lambda_adv * adv + lambda_exp * exp + lambda_rec * rec [+ lambda_gen * gen]
/// [+ lambda_id * id] + lambda_att * att. The generator minimizes the
/// adversarial objective that the discriminator maximizes. A generation term
/// is rejected in the unpaired phase; omitting it (or the identity term) in
/// a phase where it applies requires its weight to be zero.
LossReport total_generator_loss(const GeneratorTerms& terms, const LossWeights& w, Phase phase);

/// -lambda_adv * adv + lambda_exp * exp_d, with adv the full adversarial loss
/// including the penalty.
LossReport total_discriminator_loss(double adv, double exp_d, const LossWeights& w,
                                    Phase phase = Phase::kUnpaired);

}  // namespace slgan::losses
