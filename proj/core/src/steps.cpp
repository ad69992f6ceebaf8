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

#include "slgan/steps.hpp"

#include <algorithm>
#include <numeric>

namespace slgan::train {

using losses::LossReport;
using losses::Phase;

namespace {

template <typename T>
void validate_batch(const Batch<T>& b, int num_params) {
  check<ShapeError>(b.images.n() >= 2, "batches need at least 2 samples for batch means, got {}", b.images.n());
  check<ShapeError>(b.params.rows() == b.images.n() && b.targets.rows() == b.images.n(),
                    "parameter rows do not match the batch size {}", b.images.n());
  check<ShapeError>(b.params.cols() == num_params && b.targets.cols() == num_params,
                    "parameter width {} does not match the model's {}", b.params.cols(), num_params);
  if (b.target_images) {
    check<ShapeError>(b.target_images->shape() == b.images.shape(), "target images {} do not match images {}",
                      b.target_images->shape().str(), b.images.shape().str());
  }
}

template <typename T>
std::vector<double> to_double(const std::vector<T>& v) {
  return std::vector<double>(v.begin(), v.end());
}

/// Broadcasts per-sample critic gradients onto the patch map.
template <typename T>
Tensor<T> critic_map_gradient(const Tensor<T>& map, const std::vector<double>& d_means, double scale) {
  Tensor<T> out(map.shape());
  const std::size_t m = map.shape().sample_size();
  for (int i = 0; i < map.n(); ++i) {
    const T v = static_cast<T>(scale * d_means[i] / static_cast<double>(m));
    std::fill_n(out.sample(i), m, v);
  }
  return out;
}

template <typename T>
double mean_of(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.span()) s += v;
  return t.size() ? s / t.size() : 0.0;
}

template <typename T>
void axpy(Tensor<T>& y, const Tensor<T>& x, double a) {
  const T at = static_cast<T>(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += at * x[i];
}

}  // namespace

template <typename T>
LossReport generator_objective(const nn::Generator<T>& g, const nn::Discriminator<T>& d,
                               const nn::Embedder<T>* embedder, const Batch<T>& batch, const StepOptions& options,
                               T* grads) {
  validate_batch(batch, g.num_params());
  const auto& w = options.weights;
  const bool use_gen = options.use_gen && options.phase == Phase::kPaired;
  check(!use_gen || batch.target_images.has_value(), "paired phase needs target images");
  check(!options.use_id || embedder != nullptr, "identity loss needs an embedder");

  nn::GeneratorTrace<T> trace_gen, trace_rec;
  const auto gen = g.forward(batch.images, batch.targets, grads ? &trace_gen : nullptr);
  const auto rec = g.forward(gen.composited, batch.params, grads ? &trace_rec : nullptr);

  nn::DiscriminatorTrace<T> trace_fake;
  const auto fake = d.forward(gen.composited, grads ? &trace_fake : nullptr);
  const auto real = d.forward(batch.images);
  const auto adv = losses::adversarial_objective(to_double(real.critic_means()), to_double(fake.critic_means()),
                                                 options.mode);

  ParamBatch<T> d_p_est;
  const double exp = losses::expression_loss(fake.p_est, batch.targets, grads ? &d_p_est : nullptr);

  Tensor<T> d_rec;
  const double rec_loss = losses::reconstruction_loss(batch.images, rec.composited, grads ? &d_rec : nullptr);

  losses::GeneratorTerms terms;
  terms.adv = adv.value;
  terms.exp = exp;
  terms.rec = rec_loss;

  Tensor<T> d_gen_comp(gen.composited.shape());
  if (use_gen) {
    Tensor<T> d_gen;
    terms.gen = losses::generation_loss(*batch.target_images, gen.composited, Phase::kPaired, grads ? &d_gen : nullptr);
    if (grads) axpy(d_gen_comp, d_gen, w.gen);
  }
  if (options.use_id) {
    nn::Trace<T> trace_emb;
    const auto e_gen = embedder->forward(gen.composited, grads ? &trace_emb : nullptr);
    const auto e_org = embedder->forward(batch.images);
    Tensor<T> d_emb;
    terms.id = losses::identity_loss(e_gen, e_org, grads ? &d_emb : nullptr);
    if (grads) {
      for (auto& v : d_emb.span()) v = static_cast<T>(v * w.id);
      Tensor<T> d_img;
      embedder->backward(trace_emb, d_emb, nullptr, &d_img);
      d_gen_comp += d_img;
    }
  }
  Tensor<T> d_mask_gen, d_mask_rec;
  terms.att = losses::attention_loss(gen.mask, rec.mask, grads ? &d_mask_gen : nullptr,
                                     grads ? &d_mask_rec : nullptr);

  losses::LossWeights effective = w;
  if (!use_gen) effective.gen = 0.0;
  if (!options.use_id) effective.id = 0.0;
  LossReport report = losses::total_generator_loss(terms, effective, options.phase);
  const auto real_means = real.critic_means();
  const auto fake_means = fake.critic_means();
  report.extras = {{"critic_real", std::accumulate(real_means.begin(), real_means.end(), 0.0) / real_means.size()},
                   {"critic_fake", std::accumulate(fake_means.begin(), fake_means.end(), 0.0) / fake_means.size()},
                   {"mask_mean", mean_of(gen.mask)}};

  if (!grads) return report;

  // Discriminator path: adversarial and regression gradients onto I_gen.
  const Tensor<T> d_map = critic_map_gradient(fake.critic_map, adv.d_fake, w.adv);
  d_p_est *= static_cast<T>(w.exp);
  Tensor<T> d_from_disc;
  d.backward(trace_fake, &d_map, &d_p_est, nullptr, &d_from_disc);
  d_gen_comp += d_from_disc;

  // Cycle pass, then the first pass with everything that reached I_gen.
  for (auto& v : d_rec.span()) v = static_cast<T>(v * w.rec);
  for (auto& v : d_mask_gen.span()) v = static_cast<T>(v * w.att);
  for (auto& v : d_mask_rec.span()) v = static_cast<T>(v * w.att);
  Tensor<T> d_cycle_input;
  g.backward(trace_rec, rec, d_rec, &d_mask_rec, grads, &d_cycle_input);
  d_gen_comp += d_cycle_input;
  g.backward(trace_gen, gen, d_gen_comp, &d_mask_gen, grads, nullptr);
  return report;
}

template <typename T>
LossReport discriminator_objective(const nn::Generator<T>& g, const nn::Discriminator<T>& d, const Batch<T>& batch,
                                   const StepOptions& options, std::uint64_t gp_seed, T* grads) {
  validate_batch(batch, g.num_params());
  const auto& w = options.weights;
  const auto gen = g.forward(batch.images, batch.targets);

  nn::DiscriminatorTrace<T> trace_real, trace_fake;
  const auto real = d.forward(batch.images, grads ? &trace_real : nullptr);
  const auto fake = d.forward(gen.composited, grads ? &trace_fake : nullptr);
  const auto real_means = to_double(real.critic_means());
  const auto fake_means = to_double(fake.critic_means());
  const auto adv = losses::adversarial_objective(real_means, fake_means, options.mode);

  ParamBatch<T> d_p_est;
  const double exp = losses::expression_loss(real.p_est, batch.params, grads ? &d_p_est : nullptr);

  const Tensor<T> points = losses::interpolate_batch(batch.images, gen.composited, gp_seed);
  const double gp = static_cast<double>(d.gradient_penalty(points, static_cast<T>(w.adv * w.gp), grads));

  LossReport report = losses::total_discriminator_loss(adv.value - w.gp * gp, exp, w, options.phase);
  report.extras = {{"gp", gp},
                   {"critic_real", std::accumulate(real_means.begin(), real_means.end(), 0.0) / real_means.size()},
                   {"critic_fake", std::accumulate(fake_means.begin(), fake_means.end(), 0.0) / fake_means.size()}};
  if (!grads) return report;

  const Tensor<T> d_map_real = critic_map_gradient(real.critic_map, adv.d_real, -w.adv);
  const Tensor<T> d_map_fake = critic_map_gradient(fake.critic_map, adv.d_fake, -w.adv);
  d_p_est *= static_cast<T>(w.exp);
  d.backward(trace_real, &d_map_real, &d_p_est, grads, nullptr);
  d.backward(trace_fake, &d_map_fake, nullptr, grads, nullptr);
  return report;
}

#define SLGAN_STEPS_INSTANTIATE(T)                                                                              \
  template LossReport generator_objective<T>(const nn::Generator<T>&, const nn::Discriminator<T>&,              \
                                             const nn::Embedder<T>*, const Batch<T>&, const StepOptions&, T*); \
  template LossReport discriminator_objective<T>(const nn::Generator<T>&, const nn::Discriminator<T>&,          \
                                                 const Batch<T>&, const StepOptions&, std::uint64_t, T*);

SLGAN_STEPS_INSTANTIATE(float)
SLGAN_STEPS_INSTANTIATE(double)

}  // namespace slgan::train
