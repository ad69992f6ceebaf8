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

#include "slgan/losses.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>

#include "slgan/rng.hpp"

namespace slgan::losses {

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) check(std::isfinite(v), "{} contains a non-finite value", what);
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  check<ShapeError>(a.shape() == b.shape(), "{}: shape {} does not match {}", what, a.shape().str(), b.shape().str());
  check<ShapeError>(a.n() > 0, "{}: empty batch", what);
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {{"adv", adv}, {"exp", exp}, {"rec", rec}, {"gen", gen},
                                                {"id", id},   {"att", att}, {"gp", gp}};
  for (const auto& [name, value] : all) {
    check(std::isfinite(value) && value >= 0.0, "loss weight lambda_{} must be finite and >= 0, got {}", name, value);
  }
}

std::string to_string(AdversarialMode mode) { return mode == AdversarialMode::kRaD ? "rad" : "wgp"; }

std::string to_string(Phase phase) { return phase == Phase::kPaired ? "paired" : "unpaired"; }

AdversarialMode adversarial_mode_from_string(const std::string& name) {
  if (name == "rad") return AdversarialMode::kRaD;
  if (name == "wgp") return AdversarialMode::kWGP;
  throw DomainError(fmt::format("unknown adversarial mode '{}' (expected rad or wgp)", name));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double rad_activation(double critic, double opposite_mean) { return sigmoid(critic - opposite_mean); }

std::vector<double> rad_activation(std::span<const double> critic, double opposite_mean) {
  check(!critic.empty(), "rad_activation of an empty batch");
  check_finite(critic, "critic values");
  check(std::isfinite(opposite_mean), "opposite mean is not finite");
  std::vector<double> out(critic.size());
  for (std::size_t i = 0; i < critic.size(); ++i) out[i] = rad_activation(critic[i], opposite_mean);
  return out;
}

AdversarialObjective adversarial_objective(std::span<const double> real, std::span<const double> fake,
                                           AdversarialMode mode) {
  check(!real.empty() && !fake.empty(), "adversarial objective needs nonempty real and fake batches");
  check_finite(real, "real critic values");
  check_finite(fake, "fake critic values");
  const double nr = static_cast<double>(real.size());
  const double nf = static_cast<double>(fake.size());
  AdversarialObjective out;
  out.d_real.assign(real.size(), 0.0);
  out.d_fake.assign(fake.size(), 0.0);
  if (mode == AdversarialMode::kWGP) {
    out.value = mean(real) - mean(fake);
    for (auto& d : out.d_real) d = 1.0 / nr;
    for (auto& d : out.d_fake) d = -1.0 / nf;
    return out;
  }
  const double mr = mean(real);
  const double mf = mean(fake);
  double sum_r = 0.0, sum_f = 0.0, slope_r = 0.0, slope_f = 0.0;
  std::vector<double> sr(real.size()), sf(fake.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const double s = sigmoid(real[i] - mf);
    sum_r += s;
    sr[i] = s * (1.0 - s);
    slope_r += sr[i];
  }
  for (std::size_t j = 0; j < fake.size(); ++j) {
    const double s = sigmoid(fake[j] - mr);
    sum_f += s;
    sf[j] = s * (1.0 - s);
    slope_f += sf[j];
  }
  out.value = sum_r / nr - sum_f / nf;
  // Each critic value enters its own sigmoid and, through the batch mean, every
  // sigmoid of the opposite class.
  for (std::size_t i = 0; i < real.size(); ++i) out.d_real[i] = sr[i] / nr + slope_f / (nf * nr);
  for (std::size_t j = 0; j < fake.size(); ++j) out.d_fake[j] = -sf[j] / nf - slope_r / (nr * nf);
  return out;
}

double adversarial_loss(std::span<const double> real, std::span<const double> fake, double gp_term,
                        const LossWeights& w, AdversarialMode mode) {
  check(std::isfinite(gp_term), "gradient penalty is not finite");
  return adversarial_objective(real, fake, mode).value - w.gp * gp_term;
}

template <typename T>
double gradient_penalty(const Tensor<T>& points, const std::function<Tensor<T>(const Tensor<T>&)>& critic_gradient) {
  check<ShapeError>(points.n() > 0, "gradient penalty of an empty batch");
  const Tensor<T> g = critic_gradient(points);
  check<ShapeError>(g.shape() == points.shape(), "critic gradient shape {} does not match {}", g.shape().str(),
                    points.shape().str());
  double total = 0.0;
  const std::size_t m = g.shape().sample_size();
  for (int i = 0; i < g.n(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < m; ++k) sq += static_cast<double>(g.sample(i)[k]) * g.sample(i)[k];
    check(std::isfinite(sq), "critic gradient is not finite at sample {}", i);
    const double dev = std::sqrt(sq) - 1.0;
    total += dev * dev;
  }
  return total / g.n();
}

template <typename T>
Tensor<T> interpolate_batch(const Tensor<T>& real, const Tensor<T>& fake, std::uint64_t seed,
                            std::vector<double>* alphas) {
  check_same_shape(real, fake, "interpolate_batch");
  Tensor<T> out(real.shape());
  Rng rng(seed);
  if (alphas) alphas->clear();
  const std::size_t m = real.shape().sample_size();
  for (int i = 0; i < real.n(); ++i) {
    const double a = rng.uniform();
    if (alphas) alphas->push_back(a);
    const T at = static_cast<T>(a);
    for (std::size_t k = 0; k < m; ++k) out.sample(i)[k] = at * real.sample(i)[k] + (T(1) - at) * fake.sample(i)[k];
  }
  return out;
}

double expression_loss(const Eigen::VectorXd& est, const Eigen::VectorXd& target) {
  check<ShapeError>(est.size() == target.size() && est.size() > 0, "expression loss length mismatch: {} vs {}",
                    est.size(), target.size());
  return (est - target).squaredNorm() / static_cast<double>(est.size());
}

template <typename T>
double expression_loss(const ParamBatch<T>& est, const ParamBatch<T>& target, ParamBatch<T>* d_est) {
  check<ShapeError>(est.rows() == target.rows() && est.cols() == target.cols() && est.size() > 0,
                    "expression loss shape mismatch: {}x{} vs {}x{}", est.rows(), est.cols(), target.rows(),
                    target.cols());
  const double n = static_cast<double>(est.rows());
  const double N = static_cast<double>(est.cols());
  const Eigen::MatrixXd diff = est.template cast<double>() - target.template cast<double>();
  if (d_est) *d_est = (diff * (2.0 / (N * n))).template cast<T>();
  return diff.squaredNorm() / (N * n);
}

template <typename T>
double l1_image_loss(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* d_b) {
  check_same_shape(a, b, "L1 image loss");
  const double norm = static_cast<double>(a.shape().plane()) * a.n();
  double total = 0.0;
  if (d_b) *d_b = Tensor<T>(b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(b[i]) - a[i];
    total += std::abs(d);
    if (d_b) (*d_b)[i] = static_cast<T>(d > 0 ? 1.0 / norm : (d < 0 ? -1.0 / norm : 0.0));
  }
  return total / norm;
}

template <typename T>
double reconstruction_loss(const Tensor<T>& original, const Tensor<T>& reconstructed, Tensor<T>* d_rec) {
  return l1_image_loss(original, reconstructed, d_rec);
}

template <typename T>
double generation_loss(const Tensor<T>& target, const Tensor<T>& generated, Phase phase, Tensor<T>* d_gen) {
  check(phase == Phase::kPaired, "generation loss applies only to paired records");
  return l1_image_loss(target, generated, d_gen);
}

template <typename T>
double identity_loss(const Tensor<T>& e_gen, const Tensor<T>& e_org, Tensor<T>* d_gen) {
  check_same_shape(e_gen, e_org, "identity loss");
  const int n = e_gen.n();
  const std::size_t d = e_gen.shape().sample_size();
  if (d_gen) *d_gen = Tensor<T>(e_gen.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* g = e_gen.sample(i);
    const T* o = e_org.sample(i);
    double gg = 0.0, oo = 0.0, go = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      gg += double(g[k]) * g[k];
      oo += double(o[k]) * o[k];
      go += double(g[k]) * o[k];
    }
    const double ng = std::sqrt(gg), no = std::sqrt(oo);
    check(ng > 1e-8 && no > 1e-8, "identity loss: embedding norm below 1e-8 at sample {}", i);
    const double cos = go / (ng * no);
    total += 1.0 - cos;
    if (d_gen) {
      T* dg = d_gen->sample(i);
      for (std::size_t k = 0; k < d; ++k) dg[k] = static_cast<T>(-(o[k] / (ng * no) - cos * g[k] / gg) / n);
    }
  }
  return total / n;
}

template <typename T>
double attention_loss(const Tensor<T>& mask_gen, const Tensor<T>& mask_rec, Tensor<T>* d_gen, Tensor<T>* d_rec) {
  check_same_shape(mask_gen, mask_rec, "attention loss");
  check<ShapeError>(mask_gen.c() == 1, "attention masks have one channel, got {}", mask_gen.c());
  const double norm = static_cast<double>(mask_gen.shape().plane()) * mask_gen.n();
  double total = 0.0;
  for (const Tensor<T>* m : {&mask_gen, &mask_rec}) {
    for (T v : m->span()) {
      check(v >= T(0) && v <= T(1), "attention mask value {} outside [0, 1]", static_cast<double>(v));
      total += v;
    }
  }
  if (d_gen) *d_gen = Tensor<T>(mask_gen.shape(), static_cast<T>(1.0 / norm));
  if (d_rec) *d_rec = Tensor<T>(mask_rec.shape(), static_cast<T>(1.0 / norm));
  return total / norm;
}

const LossTerm* LossReport::find(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return &t;
  return nullptr;
}

double LossReport::weighted_sum() const {
  double s = 0.0;
  for (const auto& t : terms) s += t.weight * t.value;
  return s;
}

bool LossReport::all_finite() const {
  if (!std::isfinite(total)) return false;
  for (const auto& t : terms)
    if (!std::isfinite(t.value)) return false;
  return true;
}

std::string LossReport::to_json() const {
  nlohmann::ordered_json j;
  j["network"] = network;
  j["phase"] = to_string(phase);
  j["step"] = step;
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  nlohmann::ordered_json w = nlohmann::ordered_json::object();
  for (const auto& term : terms) {
    t[term.name] = term.value;
    w[term.name] = term.weight;
  }
  j["terms"] = t;
  j["weights"] = w;
  j["total"] = total;
  nlohmann::ordered_json e = nlohmann::ordered_json::object();
  for (const auto& [k, v] : extras) e[k] = v;
  j["extras"] = e;
  return j.dump();
}

LossReport total_generator_loss(const GeneratorTerms& terms, const LossWeights& w, Phase phase) {
  w.validate();
  if (phase == Phase::kUnpaired) {
    check(!terms.gen.has_value(), "generation term supplied in the unpaired phase");
  } else {
    check(terms.gen.has_value() || w.gen == 0.0, "paired phase needs a generation term unless lambda_gen = 0");
  }
  check(terms.id.has_value() || w.id == 0.0, "identity term missing while lambda_id = {}", w.id);
  LossReport r;
  r.network = "generator";
  r.phase = phase;
  r.terms.push_back({"adv", terms.adv, w.adv});
  r.terms.push_back({"exp", terms.exp, w.exp});
  r.terms.push_back({"rec", terms.rec, w.rec});
  if (terms.gen) r.terms.push_back({"gen", *terms.gen, w.gen});
  if (terms.id) r.terms.push_back({"id", *terms.id, w.id});
  r.terms.push_back({"att", terms.att, w.att});
  r.total = r.weighted_sum();
  return r;
}

LossReport total_discriminator_loss(double adv, double exp_d, const LossWeights& w, Phase phase) {
  w.validate();
  LossReport r;
  r.network = "discriminator";
  r.phase = phase;
  r.terms.push_back({"adv", adv, -w.adv});
  r.terms.push_back({"exp", exp_d, w.exp});
  r.total = r.weighted_sum();
  return r;
}

#define SLGAN_LOSSES_INSTANTIATE(T)                                                                             \
  template double gradient_penalty<T>(const Tensor<T>&, const std::function<Tensor<T>(const Tensor<T>&)>&);     \
  template Tensor<T> interpolate_batch<T>(const Tensor<T>&, const Tensor<T>&, std::uint64_t, std::vector<double>*); \
  template double expression_loss<T>(const ParamBatch<T>&, const ParamBatch<T>&, ParamBatch<T>*);                \
  template double l1_image_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                              \
  template double reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                        \
  template double generation_loss<T>(const Tensor<T>&, const Tensor<T>&, Phase, Tensor<T>*);                     \
  template double identity_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                              \
  template double attention_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>*);

SLGAN_LOSSES_INSTANTIATE(float)
SLGAN_LOSSES_INSTANTIATE(double)

}  // namespace slgan::losses
