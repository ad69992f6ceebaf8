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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slgan/archive.hpp"
#include "slgan/common.hpp"

namespace slgan::nn {

/// All trainable values of one network in a single flat buffer, addressed
/// by named entries. Layers hold offsets, never pointers, so a set can be
/// copied, cast or swapped without rebinding.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Appends a zero-initialized entry and returns its offset.
  std::size_t add(const std::string& name, std::size_t size) {
    for (const auto& e : entries_) check<ShapeError>(e.name != name, "duplicate parameter '{}'", name);
    const std::size_t offset = values_.size();
    entries_.push_back({name, offset, size});
    values_.resize(offset + size, T(0));
    return offset;
  }

  const Entry& entry(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    throw ShapeError(fmt::format("no parameter named '{}'", name));
  }
  std::span<T> view(const std::string& name) {
    const auto& e = entry(name);
    return {values_.data() + e.offset, e.size};
  }
  std::span<const T> view(const std::string& name) const {
    const auto& e = entry(name);
    return {values_.data() + e.offset, e.size};
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return values_.size(); }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  /// Zero-filled buffer shaped like the parameters, for gradients.
  std::vector<T> zeros() const { return std::vector<T>(values_.size(), T(0)); }

  template <typename U>
  void assign_from(const ParameterSet<U>& other) {
    check<ShapeError>(other.size() == size(), "parameter count mismatch: {} vs {}", other.size(), size());
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = static_cast<T>(other.values()[i]);
  }

  bool all_finite() const {
    for (T v : values_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Stores every entry as `prefix` + name.
  void save(Archive& archive, const std::string& prefix) const {
    for (const auto& e : entries_) {
      std::vector<float> out(e.size);
      for (std::size_t i = 0; i < e.size; ++i) out[i] = static_cast<float>(values_[e.offset + i]);
      archive.put_f32(prefix + e.name, std::move(out));
    }
  }
  void load(const Archive& archive, const std::string& prefix) {
    for (const auto& e : entries_) {
      const auto& in = archive.f32(prefix + e.name);
      check<IoError>(in.size() == e.size, "parameter '{}' has {} values, expected {}", e.name, in.size(), e.size);
      for (std::size_t i = 0; i < e.size; ++i) values_[e.offset + i] = static_cast<T>(in[i]);
    }
  }

 private:
  std::vector<Entry> entries_;
  std::vector<T> values_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a flat parameter vector.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamOptions options) : options_(options), m_(size, T(0)), v_(size, T(0)) {}

  void step(std::vector<T>& params, const std::vector<T>& grads) {
    check<ShapeError>(params.size() == m_.size() && grads.size() == m_.size(), "optimizer size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T step = static_cast<T>(options_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(options_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const T g = grads[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
      params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }

  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  void save(Archive& archive, const std::string& prefix) const {
    archive.put_f32(prefix + "m", std::vector<float>(m_.begin(), m_.end()));
    archive.put_f32(prefix + "v", std::vector<float>(v_.begin(), v_.end()));
    archive.put_f64(prefix + "t", {static_cast<double>(t_)});
  }
  void load(const Archive& archive, const std::string& prefix) {
    const auto& m = archive.f32(prefix + "m");
    const auto& v = archive.f32(prefix + "v");
    check<IoError>(m.size() == m_.size() && v.size() == v_.size(), "optimizer state size mismatch");
    m_.assign(m.begin(), m.end());
    v_.assign(v.begin(), v.end());
    t_ = static_cast<std::int64_t>(archive.f64(prefix + "t").at(0));
  }

 private:
  AdamOptions options_;
  std::vector<T> m_;
  std::vector<T> v_;
  std::int64_t t_ = 0;
};

}  // namespace slgan::nn
