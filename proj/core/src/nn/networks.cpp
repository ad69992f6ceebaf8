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

#include "slgan/nn/networks.hpp"

#include <algorithm>
#include <cmath>

#include "slgan/rng.hpp"

namespace slgan::nn {

NetworkPreset NetworkPreset::mini() { return {}; }

NetworkPreset NetworkPreset::tiny() {
  NetworkPreset p;
  p.name = "tiny";
  p.gen_width = 4;
  p.gen_downsamples = 1;
  p.gen_residual_blocks = 1;
  p.disc_width = 8;
  p.disc_layers = 2;
  p.image_size = 32;
  return p;
}

NetworkPreset NetworkPreset::full() {
  NetworkPreset p;
  p.name = "full";
  p.gen_width = 64;
  p.gen_downsamples = 2;
  p.gen_residual_blocks = 6;
  p.disc_width = 64;
  p.disc_layers = 6;
  p.image_size = 128;
  return p;
}

NetworkPreset NetworkPreset::from_name(const std::string& name) {
  if (name == "mini") return mini();
  if (name == "full") return full();
  if (name == "tiny") return tiny();
  throw DomainError(fmt::format("unknown network preset '{}'", name));
}

namespace {

/// He-style initialization of every weight entry; biases stay zero and
/// normalization scales stay one.
template <typename T>
void initialize(ParameterSet<T>& set, std::uint64_t seed,
                const std::vector<std::pair<std::string, double>>& fan_ins) {
  for (std::size_t i = 0; i < fan_ins.size(); ++i) {
    const auto& [name, std] = fan_ins[i];
    init_normal(set.view(name), std, derive_seed(seed, 0x77, i));
  }
}

}  // namespace

template <typename T>
Tensor<T> tile_params(const ParamBatch<T>& params, int height, int width) {
  Tensor<T> out(static_cast<int>(params.rows()), static_cast<int>(params.cols()), height, width);
  for (int n = 0; n < out.n(); ++n)
    for (int k = 0; k < out.c(); ++k) {
      T* plane = out.channel(n, k);
      std::fill(plane, plane + static_cast<std::size_t>(height) * width, params(n, k));
    }
  return out;
}

// --- Generator --------------------------------------------------------------

template <typename T>
Generator<T>::Generator(const NetworkPreset& preset, int num_params, std::uint64_t seed)
    : preset_(preset), num_params_(num_params) {
  check(num_params >= 1, "generator needs at least one parameter");
  std::vector<std::pair<std::string, double>> init;
  auto conv = [&](Sequential<T>& seq, const std::string& name, ConvSpec spec, double gain) {
    seq.template emplace<Conv2d<T>>(weights_, name, spec);
    init.emplace_back(name + ".weight", gain / std::sqrt(static_cast<double>(spec.in_channels) * spec.kernel *
                                                         spec.kernel));
  };
  auto norm_relu = [&](Sequential<T>& seq, const std::string& name, int channels) {
    seq.template emplace<InstanceNorm<T>>(weights_, name, channels);
    seq.template emplace<Pointwise<T>>(Activation::kReLU);
  };
  const double he = std::sqrt(2.0);

  int width = preset.gen_width;
  // No normalization on the first block: the tiled parameters are spatially
  // constant, so instance norm would subtract them away.
  conv(trunk_, "enc0", {3 + num_params, width, 7, 1, 3, true}, he);
  trunk_.template emplace<Pointwise<T>>(Activation::kReLU);
  for (int d = 1; d <= preset.gen_downsamples; ++d) {
    const std::string name = fmt::format("down{}", d);
    conv(trunk_, name, {width, width * 2, 4, 2, 1, false}, he);
    width *= 2;
    norm_relu(trunk_, name + ".norm", width);
  }
  for (int r = 0; r < preset.gen_residual_blocks; ++r) {
    const std::string name = fmt::format("res{}", r);
    Sequential<T> body;
    conv(body, name + ".conv1", {width, width, 3, 1, 1, false}, he);
    norm_relu(body, name + ".norm1", width);
    conv(body, name + ".conv2", {width, width, 3, 1, 1, false}, 1.0);
    body.template emplace<InstanceNorm<T>>(weights_, name + ".norm2", width);
    trunk_.template emplace<Residual<T>>(std::move(body));
  }
  for (int d = 1; d <= preset.gen_downsamples; ++d) {
    const std::string name = fmt::format("up{}", d);
    trunk_.template emplace<ConvTranspose2d<T>>(weights_, name, ConvSpec{width, width / 2, 4, 2, 1, false});
    init.emplace_back(name + ".weight", he / std::sqrt(width * 4.0));
    width /= 2;
    norm_relu(trunk_, name + ".norm", width);
  }
  conv(image_head_, "image_head", {width, 3, 7, 1, 3, true}, 1.0);
  image_head_.template emplace<Pointwise<T>>(Activation::kTanh);
  conv(mask_head_, "mask_head", {width, 1, 7, 1, 3, true}, 1.0);
  mask_head_.template emplace<Pointwise<T>>(Activation::kSigmoid);

  initialize(weights_, seed, init);
}

template <typename T>
void Generator<T>::pin_mask(T logit) {
  auto w = weights_.view("mask_head.weight");
  std::fill(w.begin(), w.end(), T(0));
  weights_.view("mask_head.bias")[0] = logit;
}

template <typename T>
Tensor<T> Generator<T>::conditioned_input(const Tensor<T>& image, const ParamBatch<T>& params) const {
  check<ShapeError>(image.c() == 3, "generator expects RGB input, got {} channels", image.c());
  check<ShapeError>(params.rows() == image.n() && params.cols() == num_params_,
                    "parameter batch is {}x{}, expected {}x{}", params.rows(), params.cols(), image.n(), num_params_);
  const int factor = 1 << preset_.gen_downsamples;
  check<ShapeError>(image.h() % factor == 0 && image.w() % factor == 0, "image size {}x{} not divisible by {}",
                    image.h(), image.w(), factor);
  Tensor<T> x(image.n(), 3 + num_params_, image.h(), image.w());
  const Tensor<T> tiled = tile_params(params, image.h(), image.w());
  for (int n = 0; n < image.n(); ++n) {
    std::copy_n(image.sample(n), image.shape().sample_size(), x.sample(n));
    std::copy_n(tiled.sample(n), tiled.shape().sample_size(), x.sample(n) + image.shape().sample_size());
  }
  return x;
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(const Tensor<T>& image, const ParamBatch<T>& params,
                                         GeneratorTrace<T>* trace) const {
  const Tensor<T> x = conditioned_input(image, params);
  const T* w = weights_.data();
  GeneratorOutput<T> out;
  Tensor<T> features;
  trunk_.forward(w, x, features, trace ? &trace->trunk : nullptr);
  image_head_.forward(w, features, out.image, trace ? &trace->image_head : nullptr);
  mask_head_.forward(w, features, out.mask, trace ? &trace->mask_head : nullptr);

  out.composited = Tensor<T>(image.shape());
  const int plane = image.h() * image.w();
  for (int n = 0; n < image.n(); ++n) {
    const T* m = out.mask.channel(n, 0);
    for (int c = 0; c < 3; ++c) {
      const T* g = out.image.channel(n, c);
      const T* in = image.channel(n, c);
      T* o = out.composited.channel(n, c);
      for (int i = 0; i < plane; ++i) o[i] = m[i] * g[i] + (T(1) - m[i]) * in[i];
    }
  }
  if (trace) {
    trace->input = image;
    trace->features = std::move(features);
  }
  return out;
}

template <typename T>
void Generator<T>::backward(const GeneratorTrace<T>& trace, const GeneratorOutput<T>& out,
                            const Tensor<T>& d_composited, const Tensor<T>* d_mask, T* grads,
                            Tensor<T>* d_image) const {
  const Tensor<T>& input = trace.input;
  check<ShapeError>(d_composited.shape() == input.shape(), "composited gradient has shape {}, expected {}",
                    d_composited.shape().str(), input.shape().str());
  const int plane = input.h() * input.w();
  Tensor<T> dm(out.mask.shape());
  Tensor<T> dg(out.image.shape());
  if (d_image) *d_image = Tensor<T>(input.shape());
  for (int n = 0; n < input.n(); ++n) {
    const T* m = out.mask.channel(n, 0);
    T* dmn = dm.channel(n, 0);
    if (d_mask) std::copy_n(d_mask->channel(n, 0), plane, dmn);
    for (int c = 0; c < 3; ++c) {
      const T* d = d_composited.channel(n, c);
      const T* g = out.image.channel(n, c);
      const T* in = input.channel(n, c);
      T* dgc = dg.channel(n, c);
      for (int i = 0; i < plane; ++i) {
        dmn[i] += d[i] * (g[i] - in[i]);
        dgc[i] = d[i] * m[i];
      }
      if (d_image) {
        T* di = d_image->channel(n, c);
        for (int i = 0; i < plane; ++i) di[i] = d[i] * (T(1) - m[i]);
      }
    }
  }
  const T* w = weights_.data();
  Tensor<T> df;
  Tensor<T> df_mask;
  image_head_.backward(w, trace.features, out.image, dg, &trace.image_head, &df, grads);
  mask_head_.backward(w, trace.features, out.mask, dm, &trace.mask_head, &df_mask, grads);
  df += df_mask;
  if (!d_image) {
    trunk_.backward(w, trace.trunk.acts.front(), trace.features, df, &trace.trunk, nullptr, grads);
    return;
  }
  Tensor<T> dx;
  trunk_.backward(w, trace.trunk.acts.front(), trace.features, df, &trace.trunk, &dx, grads);
  for (int n = 0; n < input.n(); ++n) {
    const T* src = dx.sample(n);
    T* dst = d_image->sample(n);
    for (std::size_t i = 0; i < input.shape().sample_size(); ++i) dst[i] += src[i];
  }
}

// --- Discriminator ----------------------------------------------------------

template <typename T>
std::vector<T> DiscriminatorOutput<T>::critic_means() const {
  std::vector<T> means(static_cast<std::size_t>(critic_map.n()));
  const int plane = critic_map.h() * critic_map.w();
  for (int n = 0; n < critic_map.n(); ++n) {
    const T* c = critic_map.channel(n, 0);
    double sum = 0.0;
    for (int i = 0; i < plane; ++i) sum += c[i];
    means[n] = static_cast<T>(sum / plane);
  }
  return means;
}

template <typename T>
Discriminator<T>::Discriminator(const NetworkPreset& preset, int num_params, std::uint64_t seed)
    : preset_(preset), num_params_(num_params) {
  check(num_params >= 1 && preset.disc_layers >= 1, "invalid discriminator configuration");
  std::vector<std::pair<std::string, double>> init;
  const double gain = std::sqrt(2.0 / (1.0 + 0.01 * 0.01));
  int in = 3;
  int width = preset.disc_width;
  trunk_.reserve(preset.disc_layers);
  for (int l = 0; l < preset.disc_layers; ++l) {
    const std::string name = fmt::format("conv{}", l);
    trunk_.emplace_back(weights_, name, ConvSpec{in, width, 4, 2, 1, true});
    init.emplace_back(name + ".weight", gain / std::sqrt(in * 16.0));
    in = width;
    width *= 2;
  }
  critic_ = std::make_unique<Conv2d<T>>(weights_, "critic", ConvSpec{in, 1, 3, 1, 1, true});
  init.emplace_back("critic.weight", 1.0 / std::sqrt(in * 9.0));
  regressor_ = std::make_unique<Dense<T>>(weights_, "regressor", in, num_params);
  init.emplace_back("regressor.weight", 1.0 / std::sqrt(static_cast<double>(in)));
  initialize(weights_, seed, init);
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Tensor<T>& image, DiscriminatorTrace<T>* trace) const {
  check<ShapeError>(image.c() == 3, "discriminator expects RGB input, got {} channels", image.c());
  const T* w = weights_.data();
  DiscriminatorTrace<T> local;
  DiscriminatorTrace<T>& t = trace ? *trace : local;
  t.acts.resize(trunk_.size() + 1);
  t.acts[0] = image;
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    Tensor<T>& a = t.acts[l + 1];
    trunk_[l].forward(w, t.acts[l], a, nullptr);
    for (auto& v : a.storage()) v = v > T(0) ? v : slope_ * v;
  }
  DiscriminatorOutput<T> out;
  critic_->forward(w, t.acts.back(), out.critic_map, nullptr);
  GlobalAvgPool<T>().forward(w, t.acts.back(), t.pooled, nullptr);
  Tensor<T> p;
  regressor_->forward(w, t.pooled, p, nullptr);
  out.p_est = Eigen::Map<const ParamBatch<T>>(p.data(), p.n(), num_params_);
  return out;
}

namespace {

/// Gradient through LeakyReLU given its output.
template <typename T>
void leaky_mask(const Tensor<T>& act, T slope, Tensor<T>& d) {
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = act[i] > T(0) ? d[i] : slope * d[i];
}

}  // namespace

template <typename T>
void Discriminator<T>::backward(const DiscriminatorTrace<T>& trace, const Tensor<T>* d_critic_map,
                                const ParamBatch<T>* d_p_est, T* grads, Tensor<T>* d_image) const {
  const T* w = weights_.data();
  const Tensor<T>& top = trace.acts.back();
  Tensor<T> da(top.shape());
  if (d_critic_map) {
    if (grads) critic_->weight_grad(top, *d_critic_map, grads);
    Tensor<T> tmp;
    critic_->input_grad(w, *d_critic_map, top.shape(), tmp);
    da += tmp;
  }
  if (d_p_est) {
    check<ShapeError>(d_p_est->rows() == top.n() && d_p_est->cols() == num_params_, "regression gradient shape");
    Tensor<T> dp(top.n(), num_params_, 1, 1);
    std::copy_n(d_p_est->data(), dp.size(), dp.data());
    Tensor<T> dpool;
    regressor_->backward(w, trace.pooled, Tensor<T>(), dp, nullptr, &dpool, grads);
    Tensor<T> tmp;
    GlobalAvgPool<T>().backward(w, top, Tensor<T>(), dpool, nullptr, &tmp, nullptr);
    da += tmp;
  }
  for (std::size_t l = trunk_.size(); l-- > 0;) {
    leaky_mask(trace.acts[l + 1], slope_, da);
    if (grads) trunk_[l].weight_grad(trace.acts[l], da, grads);
    if (l == 0 && !d_image) break;
    Tensor<T> prev;
    trunk_[l].input_grad(w, da, trace.acts[l].shape(), prev);
    da = std::move(prev);
  }
  if (d_image) *d_image = std::move(da);
}

template <typename T>
Tensor<T> Discriminator<T>::critic_input_gradient(const Tensor<T>& image) const {
  DiscriminatorTrace<T> trace;
  const auto out = forward(image, &trace);
  Tensor<T> d_map(out.critic_map.shape(), T(1) / static_cast<T>(out.critic_map.h() * out.critic_map.w()));
  Tensor<T> g;
  backward(trace, &d_map, nullptr, nullptr, &g);
  return g;
}

template <typename T>
T Discriminator<T>::gradient_penalty(const Tensor<T>& image, T weight, T* grads) const {
  const T* w = weights_.data();
  DiscriminatorTrace<T> trace;
  const auto out = forward(image, &trace);
  const Tensor<T> d_map(out.critic_map.shape(), T(1) / static_cast<T>(out.critic_map.h() * out.critic_map.w()));

  // Backward pass keeping the pre-activation gradients of every layer.
  const std::size_t L = trunk_.size();
  std::vector<Tensor<T>> dz(L);
  Tensor<T> da;
  critic_->input_grad(w, d_map, trace.acts.back().shape(), da);
  for (std::size_t l = L; l-- > 0;) {
    leaky_mask(trace.acts[l + 1], slope_, da);
    dz[l] = da;
    Tensor<T> prev;
    trunk_[l].input_grad(w, da, trace.acts[l].shape(), prev);
    da = std::move(prev);
  }
  const Tensor<T>& g = da;

  const int batch = image.n();
  const std::size_t sample = image.shape().sample_size();
  std::vector<double> norms(batch);
  double penalty = 0.0;
  for (int n = 0; n < batch; ++n) {
    double sq = 0.0;
    const T* gn = g.sample(n);
    for (std::size_t i = 0; i < sample; ++i) sq += static_cast<double>(gn[i]) * gn[i];
    norms[n] = std::sqrt(sq);
    penalty += (norms[n] - 1.0) * (norms[n] - 1.0);
  }
  penalty /= batch;
  if (!grads) return static_cast<T>(penalty);

  // d penalty / d theta = u^T d g / d theta with u = 2 (||g|| - 1) g / ||g|| / batch.
  Tensor<T> v(image.shape());
  for (int n = 0; n < batch; ++n) {
    const double coef = norms[n] > 0.0 ? static_cast<double>(weight) * 2.0 * (norms[n] - 1.0) / norms[n] / batch : 0.0;
    const T* gn = g.sample(n);
    T* vn = v.sample(n);
    for (std::size_t i = 0; i < sample; ++i) vn[i] = static_cast<T>(coef * gn[i]);
  }
  for (std::size_t l = 0; l < L; ++l) {
    trunk_[l].weight_grad(v, dz[l], grads, false);
    Tensor<T> next;
    trunk_[l].linear_forward(w, v, next);
    const Tensor<T>& act = trace.acts[l + 1];
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = act[i] > T(0) ? next[i] : slope_ * next[i];
    v = std::move(next);
  }
  critic_->weight_grad(v, d_map, grads, false);
  return static_cast<T>(penalty);
}

// --- Embedder ---------------------------------------------------------------

std::string to_string(EmbedderKind kind) { return kind == EmbedderKind::kProjection ? "projection" : "trained"; }

EmbedderKind embedder_kind_from_string(const std::string& name) {
  if (name == "projection") return EmbedderKind::kProjection;
  if (name == "trained") return EmbedderKind::kTrained;
  throw DomainError(fmt::format("unknown embedder kind '{}'", name));
}

template <typename T>
Embedder<T>::Embedder(EmbedderKind kind, int image_size, std::uint64_t seed) : kind_(kind), image_size_(image_size) {
  check(image_size >= 16 && image_size % 16 == 0, "embedder image size {} must be a multiple of 16", image_size);
  if (kind == EmbedderKind::kProjection) {
    net_.template emplace<AvgPool<T>>(image_size / 16);
    net_.template emplace<Dense<T>>(weights_, "proj", 3 * 16 * 16, kDim);
    init_normal(weights_.view("proj.weight"), 1.0 / std::sqrt(3.0 * 16 * 16), derive_seed(seed, 0x51, 0));
    init_normal(weights_.view("proj.bias"), 0.1, derive_seed(seed, 0x51, 1));
    return;
  }
  std::vector<std::pair<std::string, double>> init;
  int in = 3;
  for (int l = 0; l < 3; ++l) {
    const int out = 16 << l;
    const std::string name = fmt::format("enc{}", l);
    net_.template emplace<Conv2d<T>>(weights_, name, ConvSpec{in, out, 4, 2, 1, true});
    net_.template emplace<Pointwise<T>>(Activation::kLeakyReLU, 0.2);
    init.emplace_back(name + ".weight", std::sqrt(2.0 / (in * 16.0)));
    in = out;
  }
  net_.template emplace<GlobalAvgPool<T>>();
  net_.template emplace<Dense<T>>(weights_, "out", in, kDim);
  init.emplace_back("out.weight", 1.0 / std::sqrt(static_cast<double>(in)));
  initialize(weights_, seed, init);
}

template <typename T>
Tensor<T> Embedder<T>::forward(const Tensor<T>& image, Trace<T>* trace) const {
  check<ShapeError>(image.c() == 3 && image.h() == image_size_ && image.w() == image_size_,
                    "embedder expects (n, 3, {}, {}), got {}", image_size_, image_size_, image.shape().str());
  Tensor<T> y;
  net_.forward(weights_.data(), image, y, trace);
  return y;
}

template <typename T>
void Embedder<T>::backward(const Trace<T>& trace, const Tensor<T>& d_embedding, T* grads, Tensor<T>* d_image) const {
  net_.backward(weights_.data(), trace.acts.front(), trace.acts.back(), d_embedding, &trace, d_image, grads);
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class Embedder<float>;
template class Embedder<double>;
template struct DiscriminatorOutput<float>;
template struct DiscriminatorOutput<double>;
template Tensor<float> tile_params(const ParamBatch<float>&, int, int);
template Tensor<double> tile_params(const ParamBatch<double>&, int, int);

}  // namespace slgan::nn
