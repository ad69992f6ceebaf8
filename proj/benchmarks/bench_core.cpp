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

#include <benchmark/benchmark.h>

#include "slgan/blendshape.hpp"
#include "slgan/evaluator.hpp"
#include "slgan/rng.hpp"
#include "slgan/steps.hpp"
#include "slgan/synth.hpp"

namespace {

using namespace slgan;

ImageTensor random_images(int n, int size, std::uint64_t seed) {
  ImageTensor t(n, 3, size, size);
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

nn::ParamBatch<float> random_params(int n, int num_params, std::uint64_t seed) {
  nn::ParamBatch<float> p(n, num_params);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return p;
}

void BM_GeneratorForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const auto preset = nn::NetworkPreset::mini();
  nn::Generator<float> g(preset, 8, 1);
  const auto x = random_images(batch, preset.image_size, 2);
  const auto p = random_params(batch, 8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(g.forward(x, p));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GeneratorForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward(benchmark::State& state) {
  const auto preset = nn::NetworkPreset::mini();
  nn::Discriminator<float> d(preset, 8, 1);
  const auto x = random_images(16, preset.image_size, 2);
  for (auto _ : state) benchmark::DoNotOptimize(d.forward(x));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_DiscriminatorForward)->Unit(benchmark::kMillisecond);

train::Batch<float> training_batch(int size) {
  train::Batch<float> b;
  b.images = random_images(16, size, 4);
  b.params = random_params(16, 8, 5);
  b.targets = random_params(16, 8, 6);
  return b;
}

void BM_GeneratorStep(benchmark::State& state) {
  const auto preset = nn::NetworkPreset::mini();
  nn::Generator<float> g(preset, 8, 1);
  nn::Discriminator<float> d(preset, 8, 2);
  nn::Embedder<float> e(nn::EmbedderKind::kProjection, preset.image_size, 3);
  const auto batch = training_batch(preset.image_size);
  train::StepOptions opt;
  opt.phase = losses::Phase::kUnpaired;
  std::vector<float> grads = g.weights().zeros();
  for (auto _ : state) {
    std::fill(grads.begin(), grads.end(), 0.0f);
    benchmark::DoNotOptimize(train::generator_objective<float>(g, d, &e, batch, opt, grads.data()));
  }
}
BENCHMARK(BM_GeneratorStep)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorStep(benchmark::State& state) {
  const auto preset = nn::NetworkPreset::mini();
  nn::Generator<float> g(preset, 8, 1);
  nn::Discriminator<float> d(preset, 8, 2);
  const auto batch = training_batch(preset.image_size);
  train::StepOptions opt;
  opt.phase = losses::Phase::kUnpaired;
  std::vector<float> grads = d.weights().zeros();
  for (auto _ : state) {
    std::fill(grads.begin(), grads.end(), 0.0f);
    benchmark::DoNotOptimize(train::discriminator_objective<float>(g, d, batch, opt, 7, grads.data()));
  }
}
BENCHMARK(BM_DiscriminatorStep)->Unit(benchmark::kMillisecond);

void BM_ImageEuclideanDistance(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto x = random_images(1, size, 1), y = random_images(1, size, 2);
  for (auto _ : state) benchmark::DoNotOptimize(eval::image_euclidean_distance(x, y));
}
BENCHMARK(BM_ImageEuclideanDistance)->Arg(64)->Arg(128);

void BM_RenderFace(benchmark::State& state) {
  const auto id = synth::IdentitySpec::from_seed(11);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(8, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(synth::render_face(id, ParameterVector(p), 64, 64));
}
BENCHMARK(BM_RenderFace);

void BM_SparseBasis(benchmark::State& state) {
  Rng rng(3);
  const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(150, 8, [&] { return rng.normal(); });
  const Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(8, 500, [&] { return rng.normal(); });
  const Eigen::MatrixXd D = B * C;
  SparseBasisOptions opts;
  opts.num_components = 8;
  opts.sparsity_weight = 1.0;
  opts.max_iters = 50;
  for (auto _ : state) benchmark::DoNotOptimize(build_sparse_basis(D, opts));
}
BENCHMARK(BM_SparseBasis)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
