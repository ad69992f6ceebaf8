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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "slgan/rng.hpp"

namespace slgan::testing {

struct GradCheckResult {
  int checked = 0;
  int passed = 0;
  double worst = 0.0;
  double pass_fraction() const { return checked ? static_cast<double>(passed) / checked : 1.0; }
};

/// Central-difference check of `analytic` (the gradient of f at x) on up to
/// `samples` coordinates chosen by seed. A coordinate passes when the
/// relative error is below `tol`; gradients smaller than `floor` in both
/// estimates are compared absolutely against `floor * tol`.
inline GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x, const std::vector<double>& analytic, int samples,
                                  std::uint64_t seed, double step = 1e-5, double tol = 1e-3, double floor = 1e-7) {
  GradCheckResult r;
  Rng rng(seed);
  std::vector<std::size_t> coords(x.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (static_cast<int>(coords.size()) > samples) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(samples); ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(samples);
  }
  for (std::size_t c : coords) {
    const double saved = x[c];
    x[c] = saved + step;
    const double up = f(x);
    x[c] = saved - step;
    const double down = f(x);
    x[c] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double rel = std::abs(a - numeric) / denom;
    ++r.checked;
    if (rel < tol) ++r.passed;
    r.worst = std::max(r.worst, rel);
  }
  return r;
}

}  // namespace slgan::testing
