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

#include <Eigen/Dense>

#include <cmath>

#include "doctest.h"
#include "slgan/blendshape.hpp"
#include "test_util.hpp"

using namespace slgan;
using slgan::testing::random_matrix;

namespace {

void require_nonincreasing(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    // Residuals are recomputed from scratch each sweep, so allow round-off.
    REQUIRE(trace[i] <= trace[i - 1] * (1.0 + 1e-12) + 1e-300);
  }
}

BlendshapeBasis small_basis(std::uint64_t seed, int points = 4, int h = 3) {
  BlendshapeBasis b;
  b.mean = random_matrix(3 * points, 1, seed).col(0);
  b.components = random_matrix(3 * points, h, seed + 1);
  b.scales = random_matrix(h, 1, seed + 2).col(0).cwiseAbs().array() + 0.5;
  return b;
}

}  // namespace

TEST_CASE("sparse basis recovers a sparse rank-1 factor") {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(9);
  b(1) = 0.7;
  b(4) = -1.3;
  b(7) = 0.4;
  const Eigen::RowVectorXd c = random_matrix(1, 6, 11).row(0);
  const Eigen::MatrixXd D = b * c;

  SparseBasisOptions opt;
  opt.num_components = 1;
  const auto r = build_sparse_basis(D, opt);
  const Eigen::VectorXd got = r.basis.components.col(0);
  for (int i = 0; i < 9; ++i) {
    if (i != 1 && i != 4 && i != 7) CHECK(std::abs(got(i)) < 1e-12);
  }
  CHECK((D - r.basis.components * r.coefficients).norm() < 1e-8);

  // Closed-form oracle: the component is the leading left singular vector up to scale.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU);
  const Eigen::VectorXd u = svd.matrixU().col(0);
  CHECK(std::abs(std::abs(u.dot(got)) / got.norm() - 1.0) < 1e-10);
  CHECK(got.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sparse basis on zero data returns a zero basis and a flag") {
  const Eigen::MatrixXd D = Eigen::MatrixXd::Zero(6, 4);
  SparseBasisOptions opt;
  opt.num_components = 2;
  opt.sparsity_weight = 0.5;
  const auto r = build_sparse_basis(D, opt);
  CHECK(r.zero_data);
  CHECK(r.basis.components.isZero(0.0));
  CHECK(r.coefficients.isZero(0.0));
  REQUIRE(!r.objective_trace.empty());
  for (double v : r.objective_trace) CHECK(v == 0.0);
}

TEST_CASE("full-rank factorization reaches the data") {
  const Eigen::MatrixXd D = random_matrix(12, 6, 5);
  SparseBasisOptions opt;
  opt.num_components = 6;
  const auto r = build_sparse_basis(D, opt);
  const double rel = (D - r.basis.components * r.coefficients).squaredNorm() / D.squaredNorm();
  CHECK(rel < 1e-6);
}

TEST_CASE("sparse basis rejects bad input") {
  SparseBasisOptions opt;
  opt.num_components = 5;
  CHECK_THROWS_AS(build_sparse_basis(random_matrix(6, 4, 1), opt), DomainError);
  Eigen::MatrixXd D = random_matrix(6, 6, 2);
  D(2, 3) = std::nan("");
  opt.num_components = 2;
  CHECK_THROWS_AS(build_sparse_basis(D, opt), DomainError);
  opt.sparsity_weight = -1.0;
  CHECK_THROWS_AS(build_sparse_basis(random_matrix(6, 6, 3), opt), DomainError);
}

TEST_CASE("objective trace is nonincreasing and constraints hold on fuzzed instances") {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(77, 0, trial));
    const int rows = 3 * (2 + static_cast<int>(rng.index(5)));
    const int m = 3 + static_cast<int>(rng.index(10));
    const int h = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(std::min(m, 5))));
    SparseBasisOptions opt;
    opt.num_components = h;
    opt.sparsity_weight = rng.uniform(0.0, 2.0);
    opt.constraint = trial % 2 ? ConstraintVariant::kNonnegMaxOne : ConstraintVariant::kAbsMaxOne;
    opt.max_iters = 60;
    const auto r = build_sparse_basis(random_matrix(rows, m, 1000 + trial), opt);
    CAPTURE(trial);
    require_nonincreasing(r.objective_trace);
    for (int k = 0; k < h; ++k) {
      const Eigen::VectorXd b = r.basis.components.col(k);
      if (r.coefficients.row(k).norm() == 0.0 && b.isZero()) continue;
      if (opt.constraint == ConstraintVariant::kNonnegMaxOne) {
        CHECK(b.minCoeff() >= -1e-12);
        CHECK(std::abs(b.maxCoeff() - 1.0) < 1e-6);
      } else {
        CHECK(std::abs(b.cwiseAbs().maxCoeff() - 1.0) < 1e-6);
      }
    }
    CHECK((r.basis.scales.array() > 0.0).all());
  }
}

TEST_CASE("larger sparsity weights never add significant coefficients") {
  const Eigen::MatrixXd D = random_matrix(15, 10, 99);
  int previous = std::numeric_limits<int>::max();
  for (double w : {0.0, 2.0, 8.0}) {
    SparseBasisOptions opt;
    opt.num_components = 4;
    opt.sparsity_weight = w;
    const auto r = build_sparse_basis(D, opt);
    const int count = static_cast<int>((r.coefficients.array().abs() > 1e-3).count());
    CAPTURE(w);
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("instantiate_shape") {
  const auto basis = small_basis(3);
  CHECK(instantiate_shape(basis, ParameterVector::zeros(3)) == basis.mean);

  auto unit = basis;
  unit.scales.setOnes();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
  e(1) = 1.0;
  CHECK((instantiate_shape(unit, ParameterVector(e)) - (unit.mean + unit.components.col(1))).norm() == 0.0);

  CHECK_THROWS_AS(instantiate_shape(basis, ParameterVector::zeros(2)), ShapeError);

  // Affine in p: S(a p + b q) = a S(p) + b S(q) - (a + b - 1) mean.
  const ParameterVector p(random_matrix(3, 1, 8).col(0));
  const ParameterVector q(random_matrix(3, 1, 9).col(0));
  const double a = 0.3;
  const double b = -1.7;
  const MeshVector lhs = instantiate_shape(basis, ParameterVector(a * p.values + b * q.values));
  const MeshVector rhs = a * instantiate_shape(basis, p) + b * instantiate_shape(basis, q) - (a + b - 1.0) * basis.mean;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projection round trip with orthonormalized components") {
  const auto basis = orthonormalized(small_basis(21, 6, 4));
  for (int trial = 0; trial < 10; ++trial) {
    const ParameterVector p(random_matrix(4, 1, 300 + trial).col(0));
    const auto back = project_parameters(basis, instantiate_shape(basis, p));
    CHECK((back.values - p.values).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(project_parameters(basis, basis.mean).values.isZero(0.0));

  auto scaled = basis;
  scaled.scales << 0.5, 2.0, 1.5, 3.0;
  const MeshVector s = scaled.mean + 0.5 * scaled.scales(2) * scaled.components.col(2);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(4);
  expect(2) = 0.5;
  CHECK((project_parameters(scaled, s).values - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(project_parameters(scaled, MeshVector::Zero(3)), ShapeError);
}

TEST_CASE("projection noise bound") {
  auto basis = orthonormalized(small_basis(40, 8, 3));
  basis.scales << 0.4, 1.0, 2.5;
  const double op_norm = basis.components.transpose().operatorNorm();
  const ParameterVector p(random_matrix(3, 1, 41).col(0));
  const MeshVector clean = instantiate_shape(basis, p);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd eps = 1e-2 * random_matrix(clean.size(), 1, 500 + trial).col(0);
    const auto noisy = project_parameters(basis, clean + eps);
    CHECK((noisy.values - p.values).norm() <= op_norm * eps.norm() / basis.scales.minCoeff() + 1e-12);
  }
}

TEST_CASE("interpolate_parameters") {
  ParameterVector src(Eigen::Vector2d(1.0, 0.0));
  ParameterVector trg(Eigen::Vector2d(0.0, 1.0));
  CHECK(interpolate_parameters(src, trg, 1.0).values == src.values);
  CHECK(interpolate_parameters(src, trg, 0.0).values == trg.values);
  CHECK(interpolate_parameters(src, trg, 0.5).values == Eigen::Vector2d(0.5, 0.5));
  CHECK_THROWS_AS(interpolate_parameters(src, trg, 1.5), DomainError);
  CHECK_THROWS_AS(interpolate_parameters(src, trg, -0.1), DomainError);
  CHECK_THROWS(interpolate_parameters(src, ParameterVector::zeros(3), 0.5));
  CHECK_THROWS(interpolate_parameters(src, ParameterVector(trg.values, "speech"), 0.5));
}

TEST_CASE("clamp_normalized") {
  CHECK(clamp_normalized(ParameterVector(Eigen::Vector2d(1.5, -0.5))).values == Eigen::Vector2d(1.0, -0.5));
  CHECK(clamp_normalized(ParameterVector(Eigen::Vector2d(0.2, -0.9))).values == Eigen::Vector2d(0.2, -0.9));
  CHECK(clamp_normalized(ParameterVector(Eigen::Vector2d(-3.0, 3.0))).values == Eigen::Vector2d(-1.0, 1.0));
}

TEST_CASE("basis files round-trip bitwise") {
  slgan::testing::TempDir dir("basis");
  auto basis = small_basis(5, 5, 3);
  basis.basis_kind = "speech";
  basis.constraint = ConstraintVariant::kNonnegMaxOne;
  basis.labels = {"a", "b", "c"};
  basis.dataset_hash = "abc123";
  save_basis(basis, dir.file("b.slgb"));
  const auto back = load_basis(dir.file("b.slgb"));
  CHECK(back.mean == basis.mean);
  CHECK(back.components == basis.components);
  CHECK(back.scales == basis.scales);
  CHECK(back.constraint == basis.constraint);
  CHECK(back.basis_kind == "speech");
  CHECK(back.labels == basis.labels);
  CHECK(back.dataset_hash == "abc123");
  CHECK(serialize_basis(back) == serialize_basis(basis));
  CHECK(basis_hash(back) == basis_hash(basis));
}

TEST_CASE("basis validation") {
  auto basis = small_basis(6);
  CHECK_NOTHROW(basis.validate());
  basis.scales(0) = 0.0;
  CHECK_THROWS_AS(basis.validate(), DomainError);
  basis = small_basis(6);
  basis.mean.conservativeResize(basis.mean.size() - 1);
  CHECK_THROWS_AS(basis.validate(), ShapeError);
}
