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

#include "doctest.h"
#include "gradcheck.hpp"
#include "slgan/nn/networks.hpp"
#include "test_util.hpp"

using namespace slgan;
using namespace slgan::nn;
using slgan::testing::grad_check;

namespace {

using Td = Tensor<double>;

Td random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Td t(s);
  Rng rng(seed);
  for (auto& v : t.storage()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

double dot(const Td& a, const Td& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> flat(const Td& t) { return t.storage(); }

Td unflat(const std::vector<double>& v, Shape s) {
  Td t(s);
  t.storage() = v;
  return t;
}

/// Checks a layer's input and parameter gradients for L = <R, layer(x)>.
void check_layer(const Layer<double>& layer, ParameterSet<double>& params, Shape in, std::uint64_t seed) {
  const Td x = random_tensor(in, seed);
  const Shape out_shape = layer.output_shape(in);
  const Td r = random_tensor(out_shape, seed + 1);
  Trace<double> trace;
  Td y;
  layer.forward(params.data(), x, y, &trace);
  CHECK(y.shape() == out_shape);
  std::vector<double> grads = params.zeros();
  Td dx;
  layer.backward(params.data(), x, y, r, &trace, &dx, grads.data());

  auto loss_x = [&](const std::vector<double>& v) {
    Td yy;
    layer.forward(params.data(), unflat(v, in), yy, nullptr);
    return dot(r, yy);
  };
  const auto rx = grad_check(loss_x, flat(x), flat(dx), 200, seed + 2);
  CHECK(rx.pass_fraction() >= 0.95);
  if (params.size() == 0) return;
  auto loss_p = [&](const std::vector<double>& v) {
    Td yy;
    layer.forward(v.data(), x, yy, nullptr);
    return dot(r, yy);
  };
  const auto rp = grad_check(loss_p, params.values(), grads, 200, seed + 3);
  CHECK(rp.pass_fraction() >= 0.95);
}

void randomize(ParameterSet<double>& p, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto& v : p.values()) v = scale * rng.uniform(-1.0, 1.0);
}

NetworkPreset tiny_preset() {
  NetworkPreset p;
  p.name = "tiny";
  p.gen_width = 2;
  p.gen_downsamples = 1;
  p.gen_residual_blocks = 1;
  p.disc_width = 4;
  p.disc_layers = 2;
  p.image_size = 8;
  return p;
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
  for (ConvSpec spec : {ConvSpec{2, 3, 3, 1, 1, true}, ConvSpec{3, 2, 4, 2, 1, true}, ConvSpec{2, 2, 7, 1, 3, true},
                        ConvSpec{1, 2, 3, 2, 0, true}}) {
    ParameterSet<double> params;
    Conv2d<double> conv(params, "c", spec);
    randomize(params, 5);
    const Td x = random_tensor({2, spec.in_channels, 9, 8}, 6);
    Td y;
    conv.forward(params.data(), x, y, nullptr);
    const auto w = params.view("c.weight");
    const auto b = params.view("c.bias");
    for (int n = 0; n < y.n(); ++n)
      for (int o = 0; o < y.c(); ++o)
        for (int oy = 0; oy < y.h(); ++oy)
          for (int ox = 0; ox < y.w(); ++ox) {
            double s = b[o];
            for (int i = 0; i < spec.in_channels; ++i)
              for (int ky = 0; ky < spec.kernel; ++ky)
                for (int kx = 0; kx < spec.kernel; ++kx) {
                  const int iy = oy * spec.stride - spec.padding + ky;
                  const int ix = ox * spec.stride - spec.padding + kx;
                  if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                  s += w[((o * spec.in_channels + i) * spec.kernel + ky) * spec.kernel + kx] * x.at(n, i, iy, ix);
                }
            CHECK(y.at(n, o, oy, ox) == doctest::Approx(s).epsilon(1e-12));
          }
  }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  ConvSpec spec{3, 5, 4, 2, 1, false};
  ParameterSet<double> pc;
  Conv2d<double> conv(pc, "c", spec);
  randomize(pc, 1);
  ParameterSet<double> pt;
  ConvTranspose2d<double> convt(pt, "t", ConvSpec{5, 3, 4, 2, 1, false});
  // Same tensor: conv weight [out=5][in=3][k][k] equals transposed weight [in=5][out=3][k][k].
  pt.values() = pc.values();
  const Td x = random_tensor({2, 3, 8, 8}, 2);
  Td cx;
  conv.forward(pc.data(), x, cx, nullptr);
  const Td y = random_tensor(cx.shape(), 3);
  Td ty;
  convt.forward(pt.data(), y, ty, nullptr);
  CHECK(ty.shape() == x.shape());
  CHECK(dot(cx, y) == doctest::Approx(dot(x, ty)).epsilon(1e-12));
}

TEST_CASE("layer gradients") {
  {
    ParameterSet<double> p;
    Conv2d<double> l(p, "c", {2, 3, 3, 1, 1, true});
    randomize(p, 10);
    check_layer(l, p, {2, 2, 5, 6}, 11);
  }
  {
    ParameterSet<double> p;
    Conv2d<double> l(p, "c", {2, 3, 4, 2, 1, true});
    randomize(p, 12);
    check_layer(l, p, {2, 2, 6, 6}, 13);
  }
  {
    ParameterSet<double> p;
    ConvTranspose2d<double> l(p, "t", {3, 2, 4, 2, 1, true});
    randomize(p, 14);
    check_layer(l, p, {2, 3, 3, 4}, 15);
  }
  {
    ParameterSet<double> p;
    InstanceNorm<double> l(p, "n", 3);
    randomize(p, 16);
    check_layer(l, p, {2, 3, 4, 4}, 17);
  }
  {
    ParameterSet<double> p;
    Dense<double> l(p, "d", 12, 5);
    randomize(p, 18);
    check_layer(l, p, {3, 3, 2, 2}, 19);
  }
  ParameterSet<double> none;
  check_layer(Pointwise<double>(Activation::kTanh), none, {2, 2, 3, 3}, 20);
  check_layer(Pointwise<double>(Activation::kSigmoid), none, {2, 2, 3, 3}, 21);
  check_layer(Pointwise<double>(Activation::kReLU), none, {2, 2, 3, 3}, 22);
  check_layer(Pointwise<double>(Activation::kLeakyReLU, 0.2), none, {2, 2, 3, 3}, 23);
  check_layer(GlobalAvgPool<double>(), none, {2, 3, 4, 4}, 24);
  check_layer(AvgPool<double>(2), none, {2, 3, 4, 6}, 25);
  {
    ParameterSet<double> p;
    Sequential<double> body;
    body.emplace<Conv2d<double>>(p, "a", ConvSpec{3, 3, 3, 1, 1, false});
    body.emplace<InstanceNorm<double>>(p, "an", 3);
    body.emplace<Pointwise<double>>(Activation::kTanh);
    Residual<double> res(std::move(body));
    randomize(p, 26);
    check_layer(res, p, {2, 3, 4, 4}, 27);
  }
}

TEST_CASE("generator compositing") {
  const int N = 3;
  Generator<double> g(tiny_preset(), N, 7);
  const Td img = random_tensor({2, 3, 8, 8}, 8);
  ParamBatch<double> p = ParamBatch<double>::Random(2, N);

  auto out = g.forward(img, p);
  CHECK(out.mask.shape() == Shape{2, 1, 8, 8});
  for (double m : out.mask.span()) {
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
  for (double v : out.image.span()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const double m = out.mask.at(n, 0, y, x);
          const double expect = m * out.image.at(n, c, y, x) + (1.0 - m) * img.at(n, c, y, x);
          CHECK(std::abs(out.composited.at(n, c, y, x) - expect) < 1e-6);
        }

  g.pin_mask(100.0);
  out = g.forward(img, p);
  CHECK(out.composited == out.image);
  g.pin_mask(-100.0);
  out = g.forward(img, p);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(out.composited[i] - img[i]) < 1e-6);
  g.pin_mask(0.0);
  out = g.forward(img, p);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(out.composited[i] - 0.5 * (out.image[i] + img[i])) < 1e-12);

  // Float generators behave the same.
  Generator<float> gf(tiny_preset(), N, 7);
  gf.pin_mask(-100.0f);
  const auto of = gf.forward(img.cast<float>(), p.cast<float>());
  CHECK(of.composited == img.cast<float>());
}

TEST_CASE("generator conditioning changes the output") {
  Generator<float> g(NetworkPreset::mini(), 8, 3);
  const Tensor<float> img = random_tensor({1, 3, 64, 64}, 4).cast<float>();
  ParamBatch<float> p0 = ParamBatch<float>::Zero(1, 8);
  ParamBatch<float> p1 = p0;
  p1(0, 2) = 1.0f;
  const auto a = g.forward(img, p0);
  const auto b = g.forward(img, p1);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.composited.size(); ++i) diff += std::abs(a.composited[i] - b.composited[i]);
  CHECK(diff / a.composited.size() > 0.0);
  CHECK_THROWS_AS(g.forward(img, ParamBatch<float>::Zero(1, 7)), ShapeError);
  CHECK_THROWS_AS(g.forward(random_tensor({1, 3, 62, 62}, 1).cast<float>(), p0), ShapeError);
}

TEST_CASE("generator gradients") {
  const int N = 2;
  Generator<double> g(tiny_preset(), N, 9);
  randomize(g.weights(), 10, 0.4);
  // Keep normalization scales away from zero so the trunk stays well conditioned.
  for (const auto& e : g.weights().entries())
    if (e.name.find("gamma") != std::string::npos)
      for (std::size_t i = 0; i < e.size; ++i) g.weights().values()[e.offset + i] = 1.0 + 0.2 * std::sin(double(i));
  const Td img = random_tensor({2, 3, 8, 8}, 11);
  const ParamBatch<double> p = ParamBatch<double>::Random(2, N);
  const Td rc = random_tensor(img.shape(), 12);
  const Td rm = random_tensor({2, 1, 8, 8}, 13);

  auto loss = [&](const Generator<double>& net, const Td& x) {
    const auto o = net.forward(x, p);
    return dot(rc, o.composited) + dot(rm, o.mask);
  };
  GeneratorTrace<double> trace;
  const auto out = g.forward(img, p, &trace);
  std::vector<double> grads = g.weights().zeros();
  Td dx;
  g.backward(trace, out, rc, &rm, grads.data(), &dx);

  const auto rx = grad_check([&](const std::vector<double>& v) { return loss(g, unflat(v, img.shape())); },
                             flat(img), flat(dx), 150, 1);
  CHECK(rx.pass_fraction() >= 0.95);
  Generator<double> probe(tiny_preset(), N, 9);
  const auto rp = grad_check(
      [&](const std::vector<double>& v) {
        probe.weights().values() = v;
        return loss(probe, img);
      },
      g.weights().values(), grads, 300, 2);
  CHECK(rp.pass_fraction() >= 0.95);
}

TEST_CASE("discriminator basics") {
  Discriminator<double> d(tiny_preset(), 3, 4);
  auto& w = d.weights();
  std::fill(w.values().begin(), w.values().end(), 0.0);
  w.view("critic.bias")[0] = 0.75;
  auto rb = w.view("regressor.bias");
  rb[0] = 0.1;
  rb[1] = -0.2;
  rb[2] = 0.3;
  const auto out = d.forward(random_tensor({2, 3, 8, 8}, 5));
  CHECK(out.critic_map.shape() == Shape{2, 1, 2, 2});
  for (double v : out.critic_map.span()) CHECK(v == 0.75);
  for (int n = 0; n < 2; ++n) {
    CHECK(out.p_est(n, 0) == 0.1);
    CHECK(out.p_est(n, 1) == -0.2);
    CHECK(out.p_est(n, 2) == 0.3);
  }

  Discriminator<float> df(NetworkPreset::mini(), 8, 1);
  const Tensor<float> x = random_tensor({1, 3, 64, 64}, 6).cast<float>();
  const auto a = df.forward(stack<float>({x, x}));
  CHECK(a.critic_map.slice(0) == a.critic_map.slice(1));
  CHECK(a.p_est.row(0) == a.p_est.row(1));
  CHECK(a.critic_map.shape() == Shape{2, 1, 4, 4});
  CHECK(a.p_est.cols() == 8);
}

TEST_CASE("discriminator gradients") {
  const int N = 3;
  Discriminator<double> d(tiny_preset(), N, 21);
  const Td img = random_tensor({2, 3, 8, 8}, 22);
  const Td rmap = random_tensor({2, 1, 2, 2}, 23);
  const ParamBatch<double> rp = ParamBatch<double>::Random(2, N);
  auto loss = [&](const Discriminator<double>& net, const Td& x) {
    const auto o = net.forward(x);
    return dot(rmap, o.critic_map) + (o.p_est.array() * rp.array()).sum();
  };
  DiscriminatorTrace<double> trace;
  d.forward(img, &trace);
  std::vector<double> grads = d.weights().zeros();
  Td dx;
  d.backward(trace, &rmap, &rp, grads.data(), &dx);
  CHECK(grad_check([&](const std::vector<double>& v) { return loss(d, unflat(v, img.shape())); }, flat(img),
                   flat(dx), 150, 3)
            .pass_fraction() >= 0.95);
  Discriminator<double> probe(tiny_preset(), N, 21);
  CHECK(grad_check(
            [&](const std::vector<double>& v) {
              probe.weights().values() = v;
              return loss(probe, img);
            },
            d.weights().values(), grads, 300, 4)
            .pass_fraction() >= 0.95);

  // Mean critic with respect to pixels, central differences with step 1e-3.
  const Td g = d.critic_input_gradient(img.slice(0));
  auto mean_critic = [&](const std::vector<double>& v) {
    return d.forward(unflat(v, g.shape())).critic_means()[0];
  };
  CHECK(grad_check(mean_critic, flat(img.slice(0)), flat(g), 192, 5, 1e-3).pass_fraction() >= 0.95);
}

TEST_CASE("gradient penalty weight gradients") {
  const int N = 2;
  Discriminator<double> d(tiny_preset(), N, 31);
  const Td img = random_tensor({3, 3, 8, 8}, 32);
  std::vector<double> grads = d.weights().zeros();
  const double gp = d.gradient_penalty(img, 2.5, grads.data());
  CHECK(gp >= 0.0);
  CHECK(gp == doctest::Approx(d.gradient_penalty(img, 1.0, nullptr)).epsilon(1e-14));

  // Independent evaluation of the penalty from critic_input_gradient.
  const Td g = d.critic_input_gradient(img);
  double expect = 0.0;
  for (int n = 0; n < 3; ++n) {
    double sq = 0.0;
    for (std::size_t i = 0; i < g.shape().sample_size(); ++i) sq += g.sample(n)[i] * g.sample(n)[i];
    expect += (std::sqrt(sq) - 1.0) * (std::sqrt(sq) - 1.0);
  }
  CHECK(gp == doctest::Approx(expect / 3).epsilon(1e-12));

  Discriminator<double> probe(tiny_preset(), N, 31);
  for (auto& v : grads) v /= 2.5;
  const auto r = grad_check(
      [&](const std::vector<double>& v) {
        probe.weights().values() = v;
        return probe.gradient_penalty(img, 1.0, nullptr);
      },
      d.weights().values(), grads, 300, 6);
  CHECK(r.pass_fraction() >= 0.95);
  // The penalty does not depend on biases.
  for (const char* name : {"conv0.bias", "conv1.bias", "critic.bias", "regressor.bias"}) {
    const auto& e = d.weights().entry(name);
    for (std::size_t i = 0; i < e.size; ++i) CHECK(grads[e.offset + i] == 0.0);
  }
}

TEST_CASE("embedders") {
  Embedder<double> proj(EmbedderKind::kProjection, 16, 3);
  const Td zero(Shape{1, 3, 16, 16});
  const Td e0 = proj.forward(zero);
  const auto bias = proj.weights().view("proj.bias");
  for (int k = 0; k < Embedder<double>::kDim; ++k) CHECK(e0[k] == bias[k]);

  const Td img = random_tensor({2, 3, 16, 16}, 4);
  CHECK(proj.forward(img) == proj.forward(img));

  for (auto kind : {EmbedderKind::kProjection, EmbedderKind::kTrained}) {
    Embedder<double> e(kind, 16, 5);
    const Td r = random_tensor({2, Embedder<double>::kDim, 1, 1}, 6);
    Trace<double> trace;
    e.forward(img, &trace);
    std::vector<double> grads = e.weights().zeros();
    Td dx;
    e.backward(trace, r, grads.data(), &dx);
    CHECK(grad_check([&](const std::vector<double>& v) { return dot(r, e.forward(unflat(v, img.shape()))); },
                     flat(img), flat(dx), 150, 7)
              .pass_fraction() >= 0.95);
    Embedder<double> probe(kind, 16, 5);
    CHECK(grad_check(
              [&](const std::vector<double>& v) {
                probe.weights().values() = v;
                return dot(r, probe.forward(img));
              },
              e.weights().values(), grads, 200, 8)
              .pass_fraction() >= 0.95);
  }
  CHECK_THROWS_AS(proj.forward(Td(Shape{1, 3, 32, 32})), ShapeError);
}

TEST_CASE("parameter sets and adam") {
  ParameterSet<float> p;
  p.add("a", 3);
  p.add("b", 2);
  CHECK_THROWS_AS(p.add("a", 1), ShapeError);
  CHECK(p.size() == 5);
  CHECK(p.entry("b").offset == 3);

  // Minimizes a quadratic.
  std::vector<double> x{3.0, -2.0};
  Adam<double> adam(2, {0.1, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 500; ++i) adam.step(x, {2.0 * x[0], 2.0 * x[1]});
  CHECK(std::abs(x[0]) < 1e-2);
  CHECK(std::abs(x[1]) < 1e-2);
  // First step moves each coordinate by exactly the learning rate.
  std::vector<double> y{1.0};
  Adam<double> first(1, {0.01, 0.5, 0.999, 0.0});
  first.step(y, {123.0});
  CHECK(y[0] == doctest::Approx(0.99).epsilon(1e-12));
}
