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
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "slgan/hash.hpp"
#include "slgan/synth.hpp"
#include "test_util.hpp"

using namespace slgan;
using namespace slgan::synth;

namespace {

ParameterVector unit_param(int k, double v = 1.0, int n = 8) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  p(k) = v;
  return ParameterVector(p);
}

ParameterVector random_params(std::uint64_t seed, int n = 8) {
  Rng rng(seed);
  Eigen::VectorXd p(n);
  for (int k = 0; k < n; ++k) p(k) = rng.uniform(-1.0, 1.0);
  return ParameterVector(p);
}

Manifest describe(const DatasetConfig& config) {
  Manifest m;
  m.config = config;
  for (int i = 0; i < config.num_records(); ++i) m.records.push_back(describe_sample(config, i));
  return m;
}

}  // namespace

TEST_CASE("deform_landmarks") {
  const auto id = IdentitySpec::from_seed(17);
  CHECK(deform_landmarks(id, ParameterVector::zeros(8)).points == neutral_landmarks(id));

  // Mouth-open moves the lower lip only; everything else is untouched bitwise.
  const auto open = deform_landmarks(id, unit_param(1));
  const MeshVector neutral = neutral_landmarks(id);
  for (int i = 0; i < kNumLandmarks; ++i) {
    const bool moved = open.x(i) != neutral(3 * i) || open.y(i) != neutral(3 * i + 1);
    CHECK(moved == (i == kLowerLipInner || i == kLowerLipOuter));
  }

  // Exactly linear in p.
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(100 + trial);
    const auto q = random_params(200 + trial);
    const double a = Rng(trial).uniform(-2.0, 2.0);
    const MeshVector half = deform_landmarks(id, ParameterVector(0.5 * p.values)).points;
    CHECK((half - (0.5 * (deform_landmarks(id, p).points - neutral) + neutral)).cwiseAbs().maxCoeff() < 1e-12);
    const MeshVector lhs = deform_landmarks(id, ParameterVector(a * p.values + q.values)).points - neutral;
    const MeshVector rhs = a * (deform_landmarks(id, p).points - neutral) + (deform_landmarks(id, q).points - neutral);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("modes are orthogonal and parameters are identifiable") {
  for (int n : {4, 8, 30}) {
    const Eigen::MatrixXd& modes = mode_matrix(n);
    const Eigen::MatrixXd gram = modes.transpose() * modes;
    const Eigen::MatrixXd off = gram - Eigen::MatrixXd(gram.diagonal().asDiagonal());
    CHECK(off.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(static_cast<int>(mode_labels(n).size()) == n);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto id = IdentitySpec::from_seed(trial);
    const auto p = random_params(trial + 50);
    const Eigen::VectorXd back = project_onto_modes(id, deform_landmarks(id, p), 8);
    CHECK((back - p.values).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("landmarks stay inside the frame") {
  for (int s = 0; s < 200; ++s) {
    const auto id = IdentitySpec::from_seed(derive_seed(3, 1, s));
    Eigen::VectorXd p = Eigen::VectorXd::Zero(8);
    for (int corner = 0; corner < 2; ++corner) {
      p.setConstant(corner ? 1.0 : -1.0);
      const auto lm = deform_landmarks(id, ParameterVector(p));
      for (int i = 0; i < kNumLandmarks; ++i) {
        CHECK(lm.x(i) > 0.02);
        CHECK(lm.x(i) < 0.98);
        CHECK(lm.y(i) > 0.02);
        CHECK(lm.y(i) < 0.98);
      }
    }
  }
}

TEST_CASE("render_face") {
  const auto id = IdentitySpec::from_seed(5);
  const auto p = random_params(6);
  const ImageTensor a = render_face(id, p, 64, 64);
  const ImageTensor b = render_face(id, p, 64, 64);
  CHECK(a == b);
  CHECK(a.shape() == nn::Shape{1, 3, 64, 64});
  for (float v : a.span()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }

  const ImageTensor other = render_face(IdentitySpec::from_seed(6), p, 64, 64);
  CHECK_FALSE(other == a);

  CHECK_THROWS_AS(render_face(id, p, 16, 64), DomainError);
}

TEST_CASE("a smile changes pixels inside the mouth box") {
  for (int s = 0; s < 10; ++s) {
    const auto id = IdentitySpec::from_seed(derive_seed(9, 0, s));
    const int size = 64;
    const ImageTensor neutral = render_face(id, ParameterVector::zeros(8), size, size);
    const ImageTensor smile = render_face(id, unit_param(0), size, size);
    auto box = mouth_box(deform_landmarks(id, ParameterVector::zeros(8)));
    const auto box2 = mouth_box(deform_landmarks(id, unit_param(0)));
    // Union of both boxes, widened by one pixel for the anti-aliased edge.
    const double pad = 1.0 / size;
    box = {std::min(box[0], box2[0]) - pad, std::min(box[1], box2[1]) - pad, std::max(box[2], box2[2]) + pad,
           std::max(box[3], box2[3]) + pad};
    double inside = 0.0;
    double total = 0.0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += std::abs(smile.at(0, c, y, x) - neutral.at(0, c, y, x));
        total += d;
        const double cx = (x + 0.5) / size;
        const double cy = (y + 0.5) / size;
        if (cx >= box[0] && cx <= box[2] && cy >= box[1] && cy <= box[3]) inside += d;
      }
    }
    CAPTURE(s);
    CHECK(total > 0.0);
    CHECK(inside / total > 0.9);
  }
}

TEST_CASE("dataset descriptions") {
  DatasetConfig config;
  config.n_identities = 50;
  config.per_identity = 20;
  config.paired_fraction = 0.5;
  const Manifest a = describe(config);
  const Manifest b = describe(config);
  CHECK(a.hash() == b.hash());
  CHECK(a.serialize() == b.serialize());

  int paired = 0;
  for (const auto& r : a.records) {
    paired += r.target_image.has_value();
    for (double v : r.params) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(paired >= 450);
  CHECK(paired <= 550);

  config.paired_fraction = 1.0;
  for (const auto& r : describe(config).records) CHECK(r.target_image.has_value());

  config.seed = 2;
  CHECK(describe(config).hash() != a.hash());

  config.sampling = ParamSampling::kTruncatedGaussian;
  const Manifest g = describe(config);
  for (const auto& r : g.records)
    for (double v : *r.target_params) CHECK(std::abs(v) <= 1.0);

  const Manifest parsed = Manifest::parse(a.serialize(), "");
  CHECK(parsed.serialize() == a.serialize());
}

TEST_CASE("make_sample agrees with its description") {
  DatasetConfig config;
  config.n_identities = 2;
  config.per_identity = 3;
  config.height = 32;
  config.width = 32;
  config.paired_fraction = 1.0;
  for (int i = 0; i < config.num_records(); ++i) {
    const auto s = make_sample(config, i);
    const auto r = describe_sample(config, i);
    CHECK(s.identity.seed == r.identity_seed);
    CHECK(std::vector<double>(s.params.values.data(), s.params.values.data() + 8) == r.params);
    REQUIRE(s.paired_target.has_value());
    CHECK(render_face(s.identity, s.paired_target->second, 32, 32) == s.paired_target->first);
    CHECK(s.neutral == (i % 3 == 0));
  }
}

TEST_CASE("generate_dataset writes a loadable, reproducible directory") {
  slgan::testing::TempDir dir1("ds1");
  slgan::testing::TempDir dir2("ds2");
  DatasetConfig config;
  config.n_identities = 3;
  config.per_identity = 4;
  config.height = 32;
  config.width = 32;
  const Manifest m1 = generate_dataset(config, dir1.path().string());
  const Manifest m2 = generate_dataset(config, dir2.path().string());
  CHECK(m1.hash() == m2.hash());
  CHECK(sha256_file(dir1.file("manifest.jsonl")) == m1.hash());

  const Dataset data = load_dataset(dir1.file("manifest.jsonl"));
  CHECK(data.size() == 12);
  CHECK(data.num_params() == 8);
  // PNG is 8-bit, so loaded images equal the quantized renders.
  const auto s = make_sample(config, 5);
  CHECK(data.images.slice(5) == quantize_8bit(s.image));
  CHECK(static_cast<int>(data.paired.size()) == data.target_images.n());
}

TEST_CASE("generate_dataset surfaces write failures with the partial manifest") {
  slgan::testing::TempDir dir("dsfail");
  const std::string blocker = dir.file("file");
  { std::ofstream(blocker) << "x"; }
  DatasetConfig config;
  config.n_identities = 1;
  config.per_identity = 2;
  config.height = 32;
  config.width = 32;
  try {
    generate_dataset(config, blocker + "/sub");
    FAIL("expected a write error");
  } catch (const DatasetWriteError& e) {
    CHECK(e.partial().records.empty());
  }
}

TEST_CASE("landmark difference matrix") {
  DatasetConfig config;
  config.n_identities = 3;
  config.per_identity = 4;
  Manifest m = describe(config);

  // All-neutral records give a zero matrix.
  Manifest neutral = m;
  for (auto& r : neutral.records) std::fill(r.params.begin(), r.params.end(), 0.0);
  CHECK(build_landmark_difference_matrix(neutral).matrix.isZero(0.0));

  // One record with p = e_k reproduces mode k exactly.
  Manifest single = m;
  single.records = {m.records[0], m.records[1]};
  single.records[1].params.assign(8, 0.0);
  single.records[1].params[3] = 1.0;
  const auto d = build_landmark_difference_matrix(single);
  REQUIRE(d.matrix.cols() == 2);
  CHECK(d.matrix.col(1) == mode_matrix(8).col(3));

  // An identity without a neutral record is skipped with a warning.
  Manifest missing = m;
  missing.records.erase(missing.records.begin() + 4);  // neutral of identity 1
  const auto dm = build_landmark_difference_matrix(missing);
  CHECK(dm.matrix.cols() == 8);
  CHECK(dm.warnings.size() == 1);
}

TEST_CASE("sparse basis recovers the synthetic mode subspace") {
  DatasetConfig config;
  config.n_identities = 25;
  config.per_identity = 20;
  const auto d = build_landmark_difference_matrix(describe(config));
  REQUIRE(d.matrix.cols() == 500);
  SparseBasisOptions opt;
  opt.num_components = 8;
  const auto r = build_sparse_basis(d.matrix, opt);
  const Eigen::MatrixXd q1 = Eigen::HouseholderQR<Eigen::MatrixXd>(r.basis.components).householderQ() *
                             Eigen::MatrixXd::Identity(d.matrix.rows(), 8);
  const Eigen::MatrixXd q2 = Eigen::HouseholderQR<Eigen::MatrixXd>(mode_matrix(8)).householderQ() *
                             Eigen::MatrixXd::Identity(d.matrix.rows(), 8);
  const Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(q1.transpose() * q2).singularValues();
  const double max_angle = std::acos(std::min(1.0, cosines.minCoeff())) * 180.0 / std::numbers::pi;
  CHECK(max_angle < 5.0);
}

TEST_CASE("synthetic mode basis reproduces deform_landmarks") {
  const auto basis = synthetic_mode_basis(8);
  CHECK_NOTHROW(basis.validate());
  for (int k = 0; k < 8; ++k) CHECK(basis.components.col(k).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  const auto p = random_params(4);
  const MeshVector shape = instantiate_shape(basis, p);
  CHECK((shape - deform_landmarks(IdentitySpec{}, p).points).cwiseAbs().maxCoeff() < 1e-12);
}
