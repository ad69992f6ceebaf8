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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "slgan/losses.hpp"
#include "slgan/rng.hpp"
#include "slgan/steps.hpp"

using namespace slgan;
using namespace slgan::losses;
using slgan::nn::Shape;
using slgan::testing::grad_check;

namespace {

using Td = Tensor<double>;
using Pd = ParamBatch<double>;
double* const kNoGrad = nullptr;

Td random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Td t(s);
  Rng rng(seed);
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

Td unflat(const std::vector<double>& v, Shape s) {
  Td t(s);
  t.storage() = v;
  return t;
}

LossWeights only(const char* term) {
  LossWeights w{0, 0, 0, 0, 0, 0, 0};
  const std::string t = term;
  if (t == "adv") w.adv = 1;
  if (t == "exp") w.exp = 1;
  if (t == "rec") w.rec = 1;
  if (t == "gen") w.gen = 1;
  if (t == "id") w.id = 1;
  if (t == "att") w.att = 1;
  if (t == "gp") {
    w.adv = 1;
    w.gp = 10;
  }
  return w;
}

nn::NetworkPreset tiny_preset() {
  nn::NetworkPreset p;
  p.name = "tiny";
  p.gen_width = 2;
  p.gen_downsamples = 1;
  p.gen_residual_blocks = 1;
  p.disc_width = 4;
  p.disc_layers = 2;
  p.image_size = 16;
  return p;
}

}  // namespace

TEST_CASE("relativistic activation") {
  CHECK(rad_activation(2.0, 2.0) == 0.5);
  CHECK(rad_activation(4.0, 2.0) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(rad_activation(1.0, 3.0) == doctest::Approx(0.119203).epsilon(1e-6));
  const std::vector<double> c{-30.0, 0.0, 30.0};
  for (double p : rad_activation(c, 0.3)) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK_THROWS_AS(rad_activation(std::vector<double>{}, 0.0), DomainError);
}

TEST_CASE("adversarial loss examples") {
  LossWeights w;
  const std::vector<double> same{1.5, 1.5, 1.5};
  CHECK(adversarial_loss(same, same, 0.0, w) == doctest::Approx(0.0));
  const std::vector<double> real{2, 4}, fake{1, 3};
  const double expect = (sigmoid(0) + sigmoid(2)) / 2 - (sigmoid(-2) + sigmoid(0)) / 2;
  CHECK(adversarial_loss(real, fake, 0.0, w) == doctest::Approx(0.380798).epsilon(1e-6));
  CHECK(adversarial_loss(real, fake, 0.0, w) == doctest::Approx(expect).epsilon(1e-15));
  CHECK(adversarial_loss(same, same, 1.0, w) == doctest::Approx(-10.0));
  CHECK(adversarial_loss(real, fake, 0.0, w, AdversarialMode::kWGP) == doctest::Approx(1.0));
  CHECK_THROWS_AS(adversarial_loss(std::vector<double>{NAN, 1.0}, fake, 0.0, w), DomainError);
  CHECK_THROWS_AS(adversarial_loss(std::vector<double>{}, fake, 0.0, w), DomainError);
  // Permutation invariance.
  CHECK(adversarial_loss(std::vector<double>{4, 2}, std::vector<double>{3, 1}, 0.0, w) ==
        doctest::Approx(0.380798).epsilon(1e-6));
}

TEST_CASE("adversarial objective gradients") {
  for (auto mode : {AdversarialMode::kRaD, AdversarialMode::kWGP}) {
    const std::vector<double> x{0.3, -1.2, 2.0, 0.7, -0.1};  // 3 real, 2 fake
    auto f = [&](const std::vector<double>& v) {
      return adversarial_objective(std::span(v).first(3), std::span(v).subspan(3), mode).value;
    };
    const auto obj = adversarial_objective(std::span(x).first(3), std::span(x).subspan(3), mode);
    std::vector<double> analytic = obj.d_real;
    analytic.insert(analytic.end(), obj.d_fake.begin(), obj.d_fake.end());
    const auto r = grad_check(f, x, analytic, 5, 1);
    CHECK(r.passed == r.checked);
  }
}

TEST_CASE("gradient penalty examples") {
  const Shape s{3, 3, 4, 4};
  const double k = 1.0 / std::sqrt(48.0);
  const Td x = random_tensor(s, 3);
  auto constant_gradient = [&](double scale) {
    return std::function<Td(const Td&)>([=](const Td& p) { return Td(p.shape(), scale * k); });
  };
  CHECK(gradient_penalty<double>(x, constant_gradient(1.0)) == doctest::Approx(0.0).scale(1.0));
  CHECK(gradient_penalty<double>(x, constant_gradient(2.0)) == doctest::Approx(1.0));
  CHECK(gradient_penalty<double>(x, constant_gradient(0.0)) == doctest::Approx(1.0));

  // Interpolates lie on the segments with alpha in [0, 1).
  const Td a = random_tensor(s, 4), b = random_tensor(s, 5);
  std::vector<double> alphas;
  const Td m = interpolate_batch(a, b, 9, &alphas);
  REQUIRE(alphas.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(alphas[i] >= 0.0);
    CHECK(alphas[i] < 1.0);
    for (std::size_t j = 0; j < s.sample_size(); ++j)
      CHECK(m.sample(i)[j] == doctest::Approx(alphas[i] * a.sample(i)[j] + (1 - alphas[i]) * b.sample(i)[j]));
  }
  CHECK(interpolate_batch(a, b, 9) == m);
}

TEST_CASE("expression loss examples") {
  using V = Eigen::VectorXd;
  const V p = V::LinSpaced(4, -1, 1);
  CHECK(expression_loss(p, p) == 0.0);
  CHECK(expression_loss(V::Constant(2, 0.5), V::Zero(2)) == doctest::Approx(0.25));
  CHECK(expression_loss(V{{1.0, -1.0, 0.0, 0.0}}, V::Zero(4)) == doctest::Approx(0.5));
  CHECK(expression_loss(V::Constant(1, 0.3), V::Zero(1)) == doctest::Approx(0.09));
  const V a = V::Random(5), b = V::Random(5);
  CHECK(expression_loss(a, b) == expression_loss(b, a));
  CHECK_THROWS_AS(expression_loss(V::Zero(3), V::Zero(4)), ShapeError);

  Pd est = Pd::Random(3, 4), trg = Pd::Random(3, 4);
  Pd grad;
  const double batch = expression_loss(est, trg, &grad);
  double manual = 0.0;
  for (int i = 0; i < 3; ++i)
    manual += expression_loss(V(est.row(i).transpose()), V(trg.row(i).transpose())) / 3;
  CHECK(batch == doctest::Approx(manual).epsilon(1e-14));
  std::vector<double> x(est.data(), est.data() + est.size());
  auto f = [&](const std::vector<double>& v) {
    Pd e = Eigen::Map<const Pd>(v.data(), 3, 4);
    return expression_loss(e, trg);
  };
  CHECK(grad_check(f, x, std::vector<double>(grad.data(), grad.data() + grad.size()), 12, 2).pass_fraction() == 1.0);
}

TEST_CASE("image loss examples") {
  const Td z1(Shape{1, 1, 2, 2});
  CHECK(reconstruction_loss(z1, z1) == 0.0);
  CHECK(reconstruction_loss(z1, Td(Shape{1, 1, 2, 2}, 0.25)) == doctest::Approx(0.25));
  CHECK(reconstruction_loss(Td(Shape{1, 3, 2, 2}), Td(Shape{1, 3, 2, 2}, 0.1)) == doctest::Approx(0.3));
  CHECK_THROWS_AS(reconstruction_loss(z1, Td(Shape{1, 3, 2, 2})), ShapeError);

  const Td t(Shape{1, 1, 4, 4});
  CHECK(generation_loss(t, t, Phase::kPaired) == 0.0);
  CHECK(generation_loss(t, Td(t.shape(), 0.5), Phase::kPaired) == doctest::Approx(0.5));
  CHECK(generation_loss(t, Td(t.shape(), 1.0), Phase::kPaired) == doctest::Approx(1.0));
  CHECK_THROWS_AS(generation_loss(t, t, Phase::kUnpaired), DomainError);

  const Td a = random_tensor({3, 3, 4, 5}, 1), b = random_tensor({3, 3, 4, 5}, 2);
  Td grad;
  reconstruction_loss(a, b, &grad);
  auto f = [&](const std::vector<double>& v) { return reconstruction_loss(a, unflat(v, b.shape())); };
  CHECK(grad_check(f, b.storage(), grad.storage(), 100, 3).pass_fraction() >= 0.95);
  // Batch mean is invariant to sample order.
  const Td a2 = nn::stack<double>({a.slice(2), a.slice(0), a.slice(1)});
  const Td b2 = nn::stack<double>({b.slice(2), b.slice(0), b.slice(1)});
  CHECK(reconstruction_loss(a, b) == doctest::Approx(reconstruction_loss(a2, b2)).epsilon(1e-14));
}

TEST_CASE("identity loss examples") {
  Td e(Shape{1, 4, 1, 1});
  e.storage() = {1, 2, 3, 4};
  Td neg = e;
  for (auto& v : neg.storage()) v = -v;
  Td orth(Shape{1, 4, 1, 1});
  orth.storage() = {2, -1, 0, 0};
  CHECK(identity_loss(e, e) == doctest::Approx(0.0).scale(1.0));
  CHECK(identity_loss(e, orth) == doctest::Approx(1.0));
  CHECK(identity_loss(e, neg) == doctest::Approx(2.0));
  CHECK_THROWS_AS(identity_loss(e, Td(Shape{1, 4, 1, 1})), DomainError);

  const Td g = random_tensor({3, 8, 1, 1}, 5), o = random_tensor({3, 8, 1, 1}, 6);
  const double l = identity_loss(g, o);
  CHECK(l >= 0.0);
  CHECK(l <= 2.0);
  Td grad;
  identity_loss(g, o, &grad);
  auto f = [&](const std::vector<double>& v) { return identity_loss(unflat(v, g.shape()), o); };
  CHECK(grad_check(f, g.storage(), grad.storage(), 24, 7).pass_fraction() == 1.0);
}

TEST_CASE("attention loss examples") {
  const Shape s{1, 1, 4, 4};
  CHECK(attention_loss(Td(s), Td(s)) == 0.0);
  CHECK(attention_loss(Td(s, 1.0), Td(s, 1.0)) == doctest::Approx(2.0));
  Td half(s);
  for (int i = 0; i < 8; ++i) half[i] = 1.0;
  CHECK(attention_loss(half, Td(s)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(attention_loss(Td(s, 1.5), Td(s)), DomainError);
  CHECK_THROWS_AS(attention_loss(Td(s, -0.1), Td(s)), DomainError);

  const Td m1 = random_tensor({2, 1, 3, 3}, 1, 0.0, 1.0), m2 = random_tensor({2, 1, 3, 3}, 2, 0.0, 1.0);
  Td g1, g2;
  const double l = attention_loss(m1, m2, &g1, &g2);
  CHECK(l >= 0.0);
  CHECK(l <= 2.0);
  auto f = [&](const std::vector<double>& v) { return attention_loss(unflat(v, m1.shape()), m2); };
  CHECK(grad_check(f, m1.storage(), g1.storage(), 18, 3).pass_fraction() == 1.0);
}

TEST_CASE("generator total loss") {
  LossWeights w;
  GeneratorTerms zero;
  zero.gen = 0.0;
  zero.id = 0.0;
  CHECK(total_generator_loss(zero, w, Phase::kPaired).total == 0.0);

  GeneratorTerms t;
  t.adv = 0.1;
  t.exp = 0.001;
  t.rec = 0.02;
  t.id = 0.05;
  t.att = 0.1;
  const auto unpaired = total_generator_loss(t, w, Phase::kUnpaired);
  CHECK(unpaired.find("gen") == nullptr);
  // Independently evaluated: 30*0.1 + 1000*0.001 + 10*0.02 + 4*0.05 + 0.3*0.1.
  CHECK(unpaired.total == doctest::Approx(4.43).epsilon(1e-12));
  LossWeights unit_adv = w;
  unit_adv.adv = 1.0;
  CHECK(total_generator_loss(t, unit_adv, Phase::kUnpaired).total == doctest::Approx(1.53).epsilon(1e-12));

  t.gen = 0.2;
  CHECK_THROWS_AS(total_generator_loss(t, w, Phase::kUnpaired), DomainError);
  const auto paired = total_generator_loss(t, w, Phase::kPaired);
  REQUIRE(paired.find("gen") != nullptr);
  CHECK(paired.total == doctest::Approx(6.43).epsilon(1e-12));
  t.gen.reset();
  CHECK_THROWS_AS(total_generator_loss(t, w, Phase::kPaired), DomainError);
  LossWeights no_gen = w;
  no_gen.gen = 0.0;
  CHECK(total_generator_loss(t, no_gen, Phase::kPaired).find("gen") == nullptr);
  LossWeights bad = w;
  bad.att = -1.0;
  CHECK_THROWS_AS(total_generator_loss(t, bad, Phase::kUnpaired), DomainError);
}

TEST_CASE("discriminator total loss") {
  LossWeights w;
  w.adv = 1.0;
  CHECK(total_discriminator_loss(0.0, 0.0, w).total == 0.0);
  CHECK(total_discriminator_loss(0.380798, 0.0, w).total == doctest::Approx(-0.380798));
  CHECK(total_discriminator_loss(0.0, 0.25, w).total == doctest::Approx(250.0));
}

TEST_CASE("loss reports match a weighted-sum recomputation") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    LossWeights w{rng.uniform(0, 50), rng.uniform(0, 2000), rng.uniform(0, 20), rng.uniform(0, 20),
                  rng.uniform(0, 8),  rng.uniform(0, 1),    rng.uniform(0, 20)};
    GeneratorTerms t;
    t.adv = rng.uniform(-1, 1);
    t.exp = rng.uniform(0, 1);
    t.rec = rng.uniform(0, 2);
    t.id = rng.uniform(0, 2);
    t.att = rng.uniform(0, 2);
    const bool paired = trial % 2 == 0;
    if (paired) t.gen = rng.uniform(0, 2);
    const auto r = total_generator_loss(t, w, paired ? Phase::kPaired : Phase::kUnpaired);
    double expect = w.adv * t.adv + w.exp * t.exp + w.rec * t.rec + w.id * *t.id + w.att * t.att;
    if (paired) expect += w.gen * *t.gen;
    CHECK(std::abs(r.total - expect) <= 1e-9);
    const double adv = rng.uniform(-2, 2), e = rng.uniform(0, 1);
    CHECK(std::abs(total_discriminator_loss(adv, e, w).total - (-w.adv * adv + w.exp * e)) <= 1e-9);
  }
}

TEST_CASE("loss report json") {
  GeneratorTerms t;
  t.adv = 0.5;
  t.id = 0.25;
  auto r = total_generator_loss(t, LossWeights{}, Phase::kUnpaired);
  r.step = 7;
  r.extras = {{"mask_mean", 0.125}};
  CHECK(r.to_json() ==
        R"({"network":"generator","phase":"unpaired","step":7,"terms":{"adv":0.5,"exp":0.0,"rec":0.0,"id":0.25,"att":0.0},)"
        R"("weights":{"adv":30.0,"exp":1000.0,"rec":10.0,"id":4.0,"att":0.3},"total":16.0,"extras":{"mask_mean":0.125}})");
}

// ---------------------------------------------------------------------------
// Every loss through the networks, against central differences on weights.

namespace {

struct Rig {
  nn::Generator<double> g{tiny_preset(), 3, 1};
  nn::Discriminator<double> d{tiny_preset(), 3, 2};
  nn::Embedder<double> e{nn::EmbedderKind::kTrained, 16, 3};
  train::Batch<double> batch;

  Rig() {
    // Spread the mask away from saturation and the norms away from zero.
    Rng rng(4);
    for (auto& v : g.weights().values()) v += 0.05 * rng.uniform(-1, 1);
    batch.images = random_tensor({3, 3, 16, 16}, 5, -0.9, 0.9);
    batch.target_images = random_tensor({3, 3, 16, 16}, 6, -0.9, 0.9);
    batch.params = Pd::Random(3, 3);
    batch.targets = Pd::Random(3, 3);
  }
};

}  // namespace

TEST_CASE("generator objective gradients per term") {
  Rig rig;
  for (const char* term : {"adv", "exp", "rec", "gen", "id", "att"}) {
    for (auto mode : {AdversarialMode::kRaD, AdversarialMode::kWGP}) {
      if (mode == AdversarialMode::kWGP && std::string(term) != "adv") continue;
      CAPTURE(term);
      train::StepOptions opt;
      opt.weights = only(term);
      opt.mode = mode;
      opt.phase = Phase::kPaired;
      std::vector<double> grads = rig.g.weights().zeros();
      const auto report = train::generator_objective(rig.g, rig.d, &rig.e, rig.batch, opt, grads.data());
      CHECK(report.total == doctest::Approx(report.weighted_sum()).epsilon(1e-12));
      nn::Generator<double> probe(tiny_preset(), 3, 1);
      const auto r = grad_check(
          [&](const std::vector<double>& v) {
            probe.weights().values() = v;
            return train::generator_objective(probe, rig.d, &rig.e, rig.batch, opt, kNoGrad).total;
          },
          rig.g.weights().values(), grads, 200, 17);
      CAPTURE(r.worst);
      CHECK(r.pass_fraction() >= 0.95);
    }
  }
}

TEST_CASE("generator objective with default weights") {
  Rig rig;
  for (auto phase : {Phase::kPaired, Phase::kUnpaired}) {
    train::StepOptions opt;
    opt.phase = phase;
    std::vector<double> grads = rig.g.weights().zeros();
    const auto report = train::generator_objective(rig.g, rig.d, &rig.e, rig.batch, opt, grads.data());
    CHECK((report.find("gen") != nullptr) == (phase == Phase::kPaired));
    nn::Generator<double> probe(tiny_preset(), 3, 1);
    const auto r = grad_check(
        [&](const std::vector<double>& v) {
          probe.weights().values() = v;
          return train::generator_objective(probe, rig.d, &rig.e, rig.batch, opt, kNoGrad).total;
        },
        rig.g.weights().values(), grads, 200, 18);
    CHECK(r.pass_fraction() >= 0.95);
  }
  // Ablations drop their terms from the report.
  train::StepOptions opt;
  opt.phase = Phase::kPaired;
  opt.use_gen = false;
  opt.use_id = false;
  const auto report = train::generator_objective<double>(rig.g, rig.d, nullptr, rig.batch, opt, kNoGrad);
  CHECK(report.find("gen") == nullptr);
  CHECK(report.find("id") == nullptr);
}

TEST_CASE("discriminator objective gradients per term") {
  Rig rig;
  for (const char* term : {"adv", "gp", "exp"}) {
    for (auto mode : {AdversarialMode::kRaD, AdversarialMode::kWGP}) {
      CAPTURE(term);
      train::StepOptions opt;
      opt.weights = only(term);
      opt.mode = mode;
      std::vector<double> grads = rig.d.weights().zeros();
      train::discriminator_objective(rig.g, rig.d, rig.batch, opt, 99, grads.data());
      nn::Discriminator<double> probe(tiny_preset(), 3, 2);
      const auto r = grad_check(
          [&](const std::vector<double>& v) {
            probe.weights().values() = v;
            return train::discriminator_objective(rig.g, probe, rig.batch, opt, 99, kNoGrad).total;
          },
          rig.d.weights().values(), grads, 200, 19);
      CAPTURE(r.worst);
      CHECK(r.pass_fraction() >= 0.95);
    }
  }
  train::StepOptions opt;
  const auto report = train::discriminator_objective(rig.g, rig.d, rig.batch, opt, 99, kNoGrad);
  const double gp = report.extras.front().second;
  CHECK(report.find("adv")->weight == -opt.weights.adv);
  CHECK(report.total == doctest::Approx(report.weighted_sum()).epsilon(1e-12));
  CHECK(gp >= 0.0);
}
