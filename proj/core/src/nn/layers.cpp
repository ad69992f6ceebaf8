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

#include "slgan/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "slgan/rng.hpp"

namespace slgan::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

int conv_out(int size, int k, int s, int p) { return (size + 2 * p - k) / s + 1; }

/// Valid output range [lo, hi) of positions o with 0 <= o * s - p + kk < size.
void valid_range(int out, int size, int s, int p, int kk, int& lo, int& hi) {
  lo = p > kk ? (p - kk + s - 1) / s : 0;
  const int last = size - 1 + p - kk;
  hi = last < 0 ? 0 : std::min(out, last / s + 1);
  if (hi < lo) hi = lo;
}

/// Rows (c, ky, kx), columns (oy, ox) of the patches of one sample.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int s, int p, int oh, int ow, T* cols) {
  const std::size_t plane_out = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane_out;
        int x_lo = 0;
        int x_hi = 0;
        valid_range(ow, w, s, p, kx, x_lo, x_hi);
        for (int oy = 0; oy < oh; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * w;
          std::fill(dst, dst + x_lo, T(0));
          if (s == 1) {
            std::memcpy(dst + x_lo, src + x_lo - p + kx, sizeof(T) * static_cast<std::size_t>(x_hi - x_lo));
          } else {
            for (int ox = x_lo; ox < x_hi; ++ox) dst[ox] = src[ox * s - p + kx];
          }
          std::fill(dst + x_hi, dst + ow, T(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add patch columns back onto the image.
template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int s, int p, int oh, int ow, T* x) {
  std::fill(x, x + static_cast<std::size_t>(channels) * h * w, T(0));
  const std::size_t plane_out = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane_out;
        int x_lo = 0;
        int x_hi = 0;
        valid_range(ow, w, s, p, kx, x_lo, x_hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = x_lo; ox < x_hi; ++ox) dst[ox * s - p + kx] += src[ox];
        }
      }
    }
  }
}

template <typename T>
void add_bias(const T* bias, int channels, int plane, T* y) {
  for (int c = 0; c < channels; ++c) {
    T* yc = y + static_cast<std::size_t>(c) * plane;
    const T b = bias[c];
    for (int i = 0; i < plane; ++i) yc[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& dy, T* grad) {
  const int plane = dy.h() * dy.w();
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const T* d = dy.channel(n, c);
      double sum = 0.0;
      for (int i = 0; i < plane; ++i) sum += d[i];
      grad[c] += static_cast<T>(sum);
    }
  }
}


/// Stride-1 convolutions as a sum of k * k small GEMMs over shifted views of
/// a zero-padded input, laid out with the padded row pitch so every shift is
/// a plain strided matrix. Avoids materializing k * k copies of the input.
template <typename T>
struct ShiftConv {
  int cin, cout, k, p, h, w, oh, ow, hp, wp;
  std::size_t padded_plane() const { return static_cast<std::size_t>(hp) * wp; }
  std::size_t padded_size() const { return cin * padded_plane() + k; }
  int cols() const { return oh * wp; }

  using StridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
  using StridedMapMut = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

  /// Weights regrouped as k * k blocks of (cout x cin).
  RowMat<T> regroup(const T* weights) const {
    RowMat<T> out(static_cast<Eigen::Index>(k) * k * cout, cin);
    for (int o = 0; o < cout; ++o)
      for (int i = 0; i < cin; ++i)
        for (int t = 0; t < k * k; ++t) out(t * cout + o, i) = weights[(static_cast<std::size_t>(o) * cin + i) * k * k + t];
    return out;
  }

  void pad(const T* x, std::vector<T>& xp) const {
    xp.assign(padded_size(), T(0));
    for (int c = 0; c < cin; ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(xp.data() + c * padded_plane() + static_cast<std::size_t>(y + p) * wp + p,
                    x + (static_cast<std::size_t>(c) * h + y) * w, sizeof(T) * w);
  }

  StridedMap view(const T* xp, int t) const {
    return StridedMap(xp + (t / k) * wp + t % k, cin, cols(), Eigen::OuterStride<>(padded_plane()));
  }

  void forward(const RowMat<T>& wr, const T* x, T* y, std::vector<T>& xp, RowMat<T>& acc) const {
    pad(x, xp);
    acc.setZero(cout, cols());
    for (int t = 0; t < k * k; ++t) acc.noalias() += wr.middleRows(t * cout, cout) * view(xp.data(), t);
    for (int o = 0; o < cout; ++o)
      for (int r = 0; r < oh; ++r)
        std::memcpy(y + (static_cast<std::size_t>(o) * oh + r) * ow, acc.data() + o * cols() + r * wp, sizeof(T) * ow);
  }

  /// dy in the padded-pitch layout, junk columns zero.
  void spread(const T* dy, RowMat<T>& out) const {
    out.setZero(cout, cols());
    for (int o = 0; o < cout; ++o)
      for (int r = 0; r < oh; ++r)
        std::memcpy(out.data() + o * cols() + r * wp, dy + (static_cast<std::size_t>(o) * oh + r) * ow, sizeof(T) * ow);
  }

  void input_grad(const RowMat<T>& wr, const RowMat<T>& dys, T* dx, std::vector<T>& dxp) const {
    dxp.assign(padded_size(), T(0));
    for (int t = 0; t < k * k; ++t) {
      StridedMapMut dst(dxp.data() + (t / k) * wp + t % k, cin, cols(), Eigen::OuterStride<>(padded_plane()));
      dst.noalias() += wr.middleRows(t * cout, cout).transpose() * dys;
    }
    for (int c = 0; c < cin; ++c)
      for (int y = 0; y < h; ++y)
        std::memcpy(dx + (static_cast<std::size_t>(c) * h + y) * w,
                    dxp.data() + c * padded_plane() + static_cast<std::size_t>(y + p) * wp + p, sizeof(T) * w);
  }

  void weight_grad(const RowMat<T>& dys, const T* xp, RowMat<T>& dwr) const {
    for (int t = 0; t < k * k; ++t) dwr.middleRows(t * cout, cout).noalias() += dys * view(xp, t).transpose();
  }
};

template <typename T>
ShiftConv<T> shift_conv(const ConvSpec& s, const Shape& in, const Shape& out) {
  return ShiftConv<T>{s.in_channels, s.out_channels, s.kernel, s.padding, in.h, in.w, out.h,
                      out.w, in.h + 2 * s.padding, in.w + 2 * s.padding};
}

}  // namespace

template <typename T>
void init_normal(std::span<T> values, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : values) v = static_cast<T>(stddev * rng.normal());
}

// --- Conv2d -----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(ParameterSet<T>& params, const std::string& name, ConvSpec spec) : spec_(spec) {
  check(spec.in_channels > 0 && spec.out_channels > 0 && spec.kernel > 0 && spec.stride > 0 && spec.padding >= 0,
        "invalid convolution spec for '{}'", name);
  w_off_ = params.add(name + ".weight", static_cast<std::size_t>(spec.out_channels) * fan_in());
  if (spec.bias) b_off_ = params.add(name + ".bias", static_cast<std::size_t>(spec.out_channels));
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  check<ShapeError>(in.c == spec_.in_channels, "convolution expects {} channels, got {}", spec_.in_channels, in.c);
  const Shape out{in.n, spec_.out_channels, conv_out(in.h, spec_.kernel, spec_.stride, spec_.padding),
                  conv_out(in.w, spec_.kernel, spec_.stride, spec_.padding)};
  check<ShapeError>(out.h > 0 && out.w > 0, "input {} too small for the convolution", in.str());
  return out;
}

template <typename T>
void Conv2d<T>::linear_forward(const T* params, const Tensor<T>& x, Tensor<T>& y) const {
  const Shape out = output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  if (spec_.stride == 1) {
    const auto sc = shift_conv<T>(spec_, x.shape(), out);
    const RowMat<T> wr = sc.regroup(params + w_off_);
    std::vector<T> xp;
    RowMat<T> acc;
    for (int n = 0; n < x.n(); ++n) sc.forward(wr, x.sample(n), y.sample(n), xp, acc);
    return;
  }
  const int K = static_cast<int>(fan_in());
  const int P = out.h * out.w;
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  const MapConstMat<T> W(params + w_off_, spec_.out_channels, K);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), x.c(), x.h(), x.w(), spec_.kernel, spec_.stride, spec_.padding, out.h, out.w, cols.data());
    MapMat<T> Y(y.sample(n), spec_.out_channels, P);
    Y.noalias() = W * MapConstMat<T>(cols.data(), K, P);
  }
}

template <typename T>
void Conv2d<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  linear_forward(params, x, y);
  if (!spec_.bias) return;
  for (int n = 0; n < y.n(); ++n) add_bias(params + b_off_, y.c(), y.h() * y.w(), y.sample(n));
}

template <typename T>
void Conv2d<T>::input_grad(const T* params, const Tensor<T>& dy, const Shape& in, Tensor<T>& dx) const {
  if (dx.shape() != in) dx = Tensor<T>(in);
  if (spec_.stride == 1) {
    const auto sc = shift_conv<T>(spec_, in, dy.shape());
    const RowMat<T> wr = sc.regroup(params + w_off_);
    std::vector<T> dxp;
    RowMat<T> dys;
    for (int n = 0; n < dy.n(); ++n) {
      sc.spread(dy.sample(n), dys);
      sc.input_grad(wr, dys, dx.sample(n), dxp);
    }
    return;
  }
  const int K = static_cast<int>(fan_in());
  const int P = dy.h() * dy.w();
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  const MapConstMat<T> W(params + w_off_, spec_.out_channels, K);
  for (int n = 0; n < dy.n(); ++n) {
    MapMat<T> C(cols.data(), K, P);
    C.noalias() = W.transpose() * MapConstMat<T>(dy.sample(n), spec_.out_channels, P);
    col2im(cols.data(), in.c, in.h, in.w, spec_.kernel, spec_.stride, spec_.padding, dy.h(), dy.w(), dx.sample(n));
  }
}

template <typename T>
void Conv2d<T>::weight_grad(const Tensor<T>& x, const Tensor<T>& dy, T* grads, bool with_bias) const {
  if (spec_.bias && with_bias) accumulate_bias_grad(dy, grads + b_off_);
  if (spec_.stride == 1) {
    const auto sc = shift_conv<T>(spec_, x.shape(), dy.shape());
    RowMat<T> dwr = RowMat<T>::Zero(static_cast<Eigen::Index>(spec_.kernel) * spec_.kernel * spec_.out_channels,
                                    spec_.in_channels);
    std::vector<T> xp;
    RowMat<T> dys;
    for (int n = 0; n < x.n(); ++n) {
      sc.pad(x.sample(n), xp);
      sc.spread(dy.sample(n), dys);
      sc.weight_grad(dys, xp.data(), dwr);
    }
    const int kk = spec_.kernel * spec_.kernel;
    T* dw = grads + w_off_;
    for (int o = 0; o < spec_.out_channels; ++o)
      for (int i = 0; i < spec_.in_channels; ++i)
        for (int t = 0; t < kk; ++t) dw[(static_cast<std::size_t>(o) * spec_.in_channels + i) * kk + t] += dwr(t * spec_.out_channels + o, i);
    return;
  }
  const int K = static_cast<int>(fan_in());
  const int P = dy.h() * dy.w();
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  MapMat<T> dW(grads + w_off_, spec_.out_channels, K);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), x.c(), x.h(), x.w(), spec_.kernel, spec_.stride, spec_.padding, dy.h(), dy.w(), cols.data());
    dW.noalias() += MapConstMat<T>(dy.sample(n), spec_.out_channels, P) * MapConstMat<T>(cols.data(), K, P).transpose();
  }
}

template <typename T>
void Conv2d<T>::backward(const T* params, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy,
                         const Trace<T>*, Tensor<T>* dx, T* grads) const {
  if (grads) weight_grad(x, dy, grads);
  if (dx) input_grad(params, dy, x.shape(), *dx);
}

// --- ConvTranspose2d --------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterSet<T>& params, const std::string& name, ConvSpec spec) : spec_(spec) {
  check(spec.in_channels > 0 && spec.out_channels > 0 && spec.kernel > 0 && spec.stride > 0 && spec.padding >= 0,
        "invalid transposed convolution spec for '{}'", name);
  w_off_ = params.add(name + ".weight",
                      static_cast<std::size_t>(spec.in_channels) * spec.out_channels * spec.kernel * spec.kernel);
  if (spec.bias) b_off_ = params.add(name + ".bias", static_cast<std::size_t>(spec.out_channels));
}

template <typename T>
Shape ConvTranspose2d<T>::output_shape(const Shape& in) const {
  check<ShapeError>(in.c == spec_.in_channels, "transposed convolution expects {} channels, got {}",
                    spec_.in_channels, in.c);
  return {in.n, spec_.out_channels, (in.h - 1) * spec_.stride - 2 * spec_.padding + spec_.kernel,
          (in.w - 1) * spec_.stride - 2 * spec_.padding + spec_.kernel};
}

template <typename T>
void ConvTranspose2d<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  const Shape out = output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const int K = spec_.out_channels * spec_.kernel * spec_.kernel;
  const int P = x.h() * x.w();
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  const MapConstMat<T> W(params + w_off_, spec_.in_channels, K);
  for (int n = 0; n < x.n(); ++n) {
    MapMat<T> C(cols.data(), K, P);
    C.noalias() = W.transpose() * MapConstMat<T>(x.sample(n), spec_.in_channels, P);
    col2im(cols.data(), out.c, out.h, out.w, spec_.kernel, spec_.stride, spec_.padding, x.h(), x.w(), y.sample(n));
    if (spec_.bias) add_bias(params + b_off_, out.c, out.h * out.w, y.sample(n));
  }
}

template <typename T>
void ConvTranspose2d<T>::backward(const T* params, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy,
                                  const Trace<T>*, Tensor<T>* dx, T* grads) const {
  const int K = spec_.out_channels * spec_.kernel * spec_.kernel;
  const int P = x.h() * x.w();
  std::vector<T> cols(static_cast<std::size_t>(K) * P);
  const MapConstMat<T> W(params + w_off_, spec_.in_channels, K);
  if (dx && dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  for (int n = 0; n < x.n(); ++n) {
    im2col(dy.sample(n), dy.c(), dy.h(), dy.w(), spec_.kernel, spec_.stride, spec_.padding, x.h(), x.w(),
           cols.data());
    const MapConstMat<T> C(cols.data(), K, P);
    if (grads) {
      MapMat<T> dW(grads + w_off_, spec_.in_channels, K);
      dW.noalias() += MapConstMat<T>(x.sample(n), spec_.in_channels, P) * C.transpose();
    }
    if (dx) MapMat<T>(dx->sample(n), spec_.in_channels, P).noalias() = W * C;
  }
  if (grads && spec_.bias) accumulate_bias_grad(dy, grads + b_off_);
}

// --- InstanceNorm -----------------------------------------------------------

template <typename T>
InstanceNorm<T>::InstanceNorm(ParameterSet<T>& params, const std::string& name, int channels, double eps)
    : channels_(channels), eps_(eps) {
  g_off_ = params.add(name + ".gamma", static_cast<std::size_t>(channels));
  b_off_ = params.add(name + ".beta", static_cast<std::size_t>(channels));
  auto gamma = params.view(name + ".gamma");
  std::fill(gamma.begin(), gamma.end(), T(1));
}

namespace {

template <typename T>
void plane_stats(const T* x, int plane, double eps, double& mean, double& inv_std) {
  double sum = 0.0;
  for (int i = 0; i < plane; ++i) sum += x[i];
  mean = sum / plane;
  double var = 0.0;
  for (int i = 0; i < plane; ++i) {
    const double d = x[i] - mean;
    var += d * d;
  }
  inv_std = 1.0 / std::sqrt(var / plane + eps);
}

}  // namespace

template <typename T>
void InstanceNorm<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  check<ShapeError>(x.c() == channels_, "instance norm expects {} channels, got {}", channels_, x.c());
  if (y.shape() != x.shape()) y = Tensor<T>(x.shape());
  const int plane = x.h() * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < channels_; ++c) {
      const T* xc = x.channel(n, c);
      T* yc = y.channel(n, c);
      double mean = 0.0;
      double inv_std = 0.0;
      plane_stats(xc, plane, eps_, mean, inv_std);
      const T scale = static_cast<T>(params[g_off_ + c] * inv_std);
      const T shift = static_cast<T>(params[b_off_ + c] - params[g_off_ + c] * mean * inv_std);
      for (int i = 0; i < plane; ++i) yc[i] = xc[i] * scale + shift;
    }
  }
}

template <typename T>
void InstanceNorm<T>::backward(const T* params, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy,
                               const Trace<T>*, Tensor<T>* dx, T* grads) const {
  if (dx && dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  const int plane = x.h() * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < channels_; ++c) {
      const T* xc = x.channel(n, c);
      const T* dyc = dy.channel(n, c);
      double mean = 0.0;
      double inv_std = 0.0;
      plane_stats(xc, plane, eps_, mean, inv_std);
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int i = 0; i < plane; ++i) {
        const double xhat = (xc[i] - mean) * inv_std;
        sum_dy += dyc[i];
        sum_dy_xhat += dyc[i] * xhat;
      }
      if (grads) {
        grads[g_off_ + c] += static_cast<T>(sum_dy_xhat);
        grads[b_off_ + c] += static_cast<T>(sum_dy);
      }
      if (dx) {
        const double gamma = params[g_off_ + c];
        const double mean_dy = sum_dy / plane;
        const double mean_dy_xhat = sum_dy_xhat / plane;
        T* dxc = dx->channel(n, c);
        for (int i = 0; i < plane; ++i) {
          const double xhat = (xc[i] - mean) * inv_std;
          dxc[i] = static_cast<T>(gamma * inv_std * (dyc[i] - mean_dy - xhat * mean_dy_xhat));
        }
      }
    }
  }
}

// --- Pointwise --------------------------------------------------------------

template <typename T>
void Pointwise<T>::forward(const T*, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  if (y.shape() != x.shape()) y = Tensor<T>(x.shape());
  const std::size_t n = x.size();
  const T* in = x.data();
  T* out = y.data();
  switch (kind_) {
    case Activation::kReLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
      break;
    case Activation::kLeakyReLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : slope_ * in[i];
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
      break;
  }
}

template <typename T>
void Pointwise<T>::backward(const T*, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy, const Trace<T>*,
                            Tensor<T>* dx, T*) const {
  if (!dx) return;
  if (dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  const std::size_t n = x.size();
  const T* in = x.data();
  const T* out = y.data();
  const T* d = dy.data();
  T* g = dx->data();
  switch (kind_) {
    case Activation::kReLU:
      for (std::size_t i = 0; i < n; ++i) g[i] = in[i] > T(0) ? d[i] : T(0);
      break;
    case Activation::kLeakyReLU:
      for (std::size_t i = 0; i < n; ++i) g[i] = in[i] > T(0) ? d[i] : slope_ * d[i];
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) g[i] = d[i] * (T(1) - out[i] * out[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) g[i] = d[i] * out[i] * (T(1) - out[i]);
      break;
  }
}

// --- Dense ------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(ParameterSet<T>& params, const std::string& name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  w_off_ = params.add(name + ".weight", static_cast<std::size_t>(in_features) * out_features);
  b_off_ = params.add(name + ".bias", static_cast<std::size_t>(out_features));
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& in) const {
  check<ShapeError>(static_cast<int>(in.sample_size()) == in_, "dense layer expects {} features, got {}", in_,
                    in.sample_size());
  return {in.n, out_, 1, 1};
}

template <typename T>
void Dense<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  const Shape out = output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const MapConstMat<T> W(params + w_off_, out_, in_);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params + b_off_, out_);
  MapMat<T> Y(y.data(), x.n(), out_);
  Y.noalias() = MapConstMat<T>(x.data(), x.n(), in_) * W.transpose();
  Y.rowwise() += b.transpose();
}

template <typename T>
void Dense<T>::backward(const T* params, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy, const Trace<T>*,
                        Tensor<T>* dx, T* grads) const {
  const MapConstMat<T> D(dy.data(), x.n(), out_);
  if (grads) {
    MapMat<T> dW(grads + w_off_, out_, in_);
    dW.noalias() += D.transpose() * MapConstMat<T>(x.data(), x.n(), in_);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads + b_off_, out_);
    db += D.colwise().sum();
  }
  if (dx) {
    if (dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
    MapMat<T>(dx->data(), x.n(), in_).noalias() = D * MapConstMat<T>(params + w_off_, out_, in_);
  }
}

// --- GlobalAvgPool ----------------------------------------------------------

template <typename T>
void GlobalAvgPool<T>::forward(const T*, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  const Shape out = output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const int plane = x.h() * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* xc = x.channel(n, c);
      double sum = 0.0;
      for (int i = 0; i < plane; ++i) sum += xc[i];
      y.at(n, c, 0, 0) = static_cast<T>(sum / plane);
    }
  }
}

template <typename T>
void GlobalAvgPool<T>::backward(const T*, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy, const Trace<T>*,
                                Tensor<T>* dx, T*) const {
  if (!dx) return;
  if (dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  const int plane = x.h() * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T g = dy.at(n, c, 0, 0) / static_cast<T>(plane);
      T* d = dx->channel(n, c);
      std::fill(d, d + plane, g);
    }
  }
}

// --- AvgPool ----------------------------------------------------------------

template <typename T>
Shape AvgPool<T>::output_shape(const Shape& in) const {
  check<ShapeError>(factor_ > 0 && in.h % factor_ == 0 && in.w % factor_ == 0,
                    "pooling factor {} does not divide {}x{}", factor_, in.h, in.w);
  return {in.n, in.c, in.h / factor_, in.w / factor_};
}

template <typename T>
void AvgPool<T>::forward(const T*, const Tensor<T>& x, Tensor<T>& y, Trace<T>*) const {
  const Shape out = output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const T inv = T(1) / static_cast<T>(factor_ * factor_);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < out.h; ++oy) {
        for (int ox = 0; ox < out.w; ++ox) {
          T sum = 0;
          for (int dy = 0; dy < factor_; ++dy)
            for (int dx = 0; dx < factor_; ++dx) sum += x.at(n, c, oy * factor_ + dy, ox * factor_ + dx);
          y.at(n, c, oy, ox) = sum * inv;
        }
      }
    }
  }
}

template <typename T>
void AvgPool<T>::backward(const T*, const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& dy, const Trace<T>*,
                          Tensor<T>* dx, T*) const {
  if (!dx) return;
  if (dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  const T inv = T(1) / static_cast<T>(factor_ * factor_);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) dx->at(n, c, y, xx) = dy.at(n, c, y / factor_, xx / factor_) * inv;
}

// --- Sequential / Residual --------------------------------------------------

template <typename T>
Shape Sequential<T>::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename T>
void Sequential<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const {
  if (layers_.empty()) {
    y = x;
    return;
  }
  if (trace) {
    trace->acts.resize(layers_.size() + 1);
    trace->children.resize(layers_.size());
    trace->acts[0] = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->forward(params, trace->acts[i], trace->acts[i + 1], &trace->children[i]);
    }
    y = trace->acts.back();
    return;
  }
  Tensor<T> a;
  Tensor<T> b;
  const Tensor<T>* in = &x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor<T>& out = (i % 2 == 0) ? a : b;
    layers_[i]->forward(params, *in, out, nullptr);
    in = &out;
  }
  y = *in;
}

template <typename T>
void Sequential<T>::backward(const T* params, const Tensor<T>&, const Tensor<T>&, const Tensor<T>& dy,
                             const Trace<T>* trace, Tensor<T>* dx, T* grads) const {
  check(trace != nullptr && trace->acts.size() == layers_.size() + 1, "backward needs the forward trace");
  Tensor<T> d = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_dx = i > 0 || dx != nullptr;
    Tensor<T> next;
    layers_[i]->backward(params, trace->acts[i], trace->acts[i + 1], d, &trace->children[i], need_dx ? &next : nullptr,
                         grads);
    if (!need_dx) break;
    d = std::move(next);
  }
  if (dx) *dx = std::move(d);
}

template <typename T>
void Residual<T>::forward(const T* params, const Tensor<T>& x, Tensor<T>& y, Trace<T>* trace) const {
  Trace<T>* inner = nullptr;
  if (trace) {
    trace->children.resize(1);
    inner = &trace->children[0];
  }
  body_.forward(params, x, y, inner);
  y += x;
}

template <typename T>
void Residual<T>::backward(const T* params, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy,
                           const Trace<T>* trace, Tensor<T>* dx, T* grads) const {
  check(trace != nullptr && trace->children.size() == 1, "backward needs the forward trace");
  Tensor<T> dbody;
  body_.backward(params, x, y, dy, &trace->children[0], dx ? &dbody : nullptr, grads);
  if (dx) {
    *dx = std::move(dbody);
    *dx += dy;
  }
}

#define SLGAN_INSTANTIATE(T)                                      \
  template class Conv2d<T>;                                       \
  template class ConvTranspose2d<T>;                              \
  template class InstanceNorm<T>;                                 \
  template class Pointwise<T>;                                    \
  template class Dense<T>;                                        \
  template class GlobalAvgPool<T>;                                \
  template class AvgPool<T>;                                      \
  template class Sequential<T>;                                   \
  template class Residual<T>;                                     \
  template void init_normal<T>(std::span<T>, double, std::uint64_t);

SLGAN_INSTANTIATE(float)
SLGAN_INSTANTIATE(double)

}  // namespace slgan::nn
