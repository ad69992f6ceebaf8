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

#include "slgan/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include "slgan/hash.hpp"
#include "slgan/rng.hpp"

namespace slgan::synth {
namespace {

constexpr double kCenterX = 0.5;
constexpr double kCenterY = 0.48;
constexpr int kSupersample = 4;

// RNG stream tags.
constexpr std::uint64_t kIdentityStream = 0x1d;
constexpr std::uint64_t kRecordStream = 0x5e;
constexpr std::uint64_t kAuxModeStream = 0xa0;

constexpr int kCoords = 3 * kNumLandmarks;

void set_disp(Eigen::VectorXd& mode, int landmark, double dx, double dy) {
  mode(3 * landmark) = dx;
  mode(3 * landmark + 1) = dy;
}

Eigen::MatrixXd build_modes() {
  Eigen::MatrixXd modes = Eigen::MatrixXd::Zero(kCoords, kMaxParams);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kCoords);

  // 0: mouth curve, corners move vertically.
  Eigen::VectorXd m = zero;
  set_disp(m, kMouthLeft, 0.0, -0.03);
  set_disp(m, kMouthRight, 0.0, -0.03);
  modes.col(0) = m;

  // 1: mouth open, lower lip drops.
  m = zero;
  set_disp(m, kLowerLipInner, 0.0, 0.03);
  set_disp(m, kLowerLipOuter, 0.0, 0.034);
  modes.col(1) = m;

  // 2, 3: brow raise left / right.
  for (int side = 0; side < 2; ++side) {
    m = zero;
    const int first = side == 0 ? kLeftBrowFirst : kRightBrowFirst;
    for (int i = 0; i < 3; ++i) set_disp(m, first + i, 0.0, -0.03);
    modes.col(2 + side) = m;
  }

  // 4, 5: eye open left / right.
  m = zero;
  set_disp(m, kLeftEyeTop, 0.0, -0.02);
  set_disp(m, kLeftEyeBottom, 0.0, 0.007);
  modes.col(4) = m;
  m = zero;
  set_disp(m, kRightEyeTop, 0.0, -0.02);
  set_disp(m, kRightEyeBottom, 0.0, 0.007);
  modes.col(5) = m;

  // 6: jaw shift, chin and lower lip move sideways.
  m = zero;
  for (int i = kJawFirst + 1; i < kJawLast; ++i) {
    set_disp(m, i, 0.03 * std::sin(i * std::numbers::pi / 8.0), 0.0);
  }
  set_disp(m, kLowerLipInner, 0.012, 0.0);
  set_disp(m, kLowerLipOuter, 0.012, 0.0);
  modes.col(6) = m;

  // 7: lip pucker. The lower-inner motion cancels the overlap with mode 1.
  m = zero;
  set_disp(m, kMouthLeft, 0.025, 0.0);
  set_disp(m, kMouthRight, -0.025, 0.0);
  set_disp(m, kUpperLipOuter, 0.0, -0.008);
  set_disp(m, kLowerLipOuter, 0.0, 0.008);
  set_disp(m, kLowerLipInner, 0.0, -0.008 * 0.034 / 0.03);
  modes.col(7) = m;

  // Auxiliary modes for larger parameter counts.
  for (int k = kNumNamedModes; k < kMaxParams; ++k) {
    Rng rng(derive_seed(kAuxModeStream, static_cast<std::uint64_t>(k)));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kCoords);
    for (int i = 0; i < kNumLandmarks; ++i) {
      v(3 * i) = rng.normal();
      v(3 * i + 1) = rng.normal();
    }
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd u = modes.col(j);
      v -= (u.dot(v) / u.squaredNorm()) * u;
    }
    modes.col(k) = v * (0.008 / v.cwiseAbs().maxCoeff());
  }
  return modes;
}

Rgb scale(const Rgb& c, double s) { return {c[0] * s, c[1] * s, c[2] * s}; }

bool in_polygon(const double* xs, const double* ys, int count, double px, double py) {
  bool inside = false;
  for (int i = 0, j = count - 1; i < count; j = i++) {
    if ((ys[i] > py) != (ys[j] > py)) {
      const double xcross = xs[j] + (py - ys[j]) * (xs[i] - xs[j]) / (ys[i] - ys[j]);
      if (px < xcross) inside = !inside;
    }
  }
  return inside;
}

double segment_distance2(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx);
  const double dy = py - (ay + t * vy);
  return dx * dx + dy * dy;
}

/// Quadratic through (x0, y0), (x1, y1), (x2, y2) evaluated at x.
double parabola(double x, double x0, double y0, double x1, double y1, double x2, double y2) {
  const double d01 = x0 - x1;
  const double d02 = x0 - x2;
  const double d12 = x1 - x2;
  if (std::abs(d01) < 1e-9 || std::abs(d02) < 1e-9 || std::abs(d12) < 1e-9) return y1;
  return y0 * (x - x1) * (x - x2) / (d01 * d02) - y1 * (x - x0) * (x - x2) / (d01 * d12) +
         y2 * (x - x0) * (x - x1) / (d02 * d12);
}

/// Precomputed per-render geometry.
struct Scene {
  const IdentitySpec& id;
  const FaceLandmarks& lm;
  double jaw_x[kJawLast + 1];
  double jaw_y[kJawLast + 1];

  Scene(const IdentitySpec& identity, const FaceLandmarks& landmarks) : id(identity), lm(landmarks) {
    for (int i = kJawFirst; i <= kJawLast; ++i) {
      jaw_x[i] = lm.x(i);
      jaw_y[i] = lm.y(i);
    }
  }

  bool in_eye(double x, double y, int outer, int top, int inner, int bottom, double& iris_dist2) const {
    const double left = std::min(lm.x(outer), lm.x(inner));
    const double right = std::max(lm.x(outer), lm.x(inner));
    const double cx = 0.5 * (left + right);
    const double cy = 0.5 * (lm.y(outer) + lm.y(inner));
    const double hw = 0.5 * (right - left);
    const double ht = std::max(cy - lm.y(top), 1e-4);
    const double hb = std::max(lm.y(bottom) - cy, 1e-4);
    const double dx = (x - cx) / hw;
    const double dy = y < cy ? (y - cy) / ht : (y - cy) / hb;
    iris_dist2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return dx * dx + dy * dy <= 1.0;
  }

  Rgb color(double x, double y) const {
    Rgb c = id.background;

    // Hair, behind the face.
    {
      const double hx = (x - kCenterX) / (id.face_half_width * 1.14);
      const double hy = (y - (kCenterY - id.face_upper_height * 0.22)) / (id.face_upper_height * 0.98);
      if (hx * hx + hy * hy <= 1.0 && y < kCenterY + 0.06) c = id.hair;
    }
    // Neck.
    if (std::abs(x - kCenterX) < id.face_half_width * 0.45 && y > kCenterY + id.face_lower_height * 0.55) {
      c = scale(id.skin, 0.82);
    }
    // Face: upper half-ellipse plus the jaw polygon.
    bool face = false;
    if (y <= kCenterY) {
      const double fx = (x - kCenterX) / id.face_half_width;
      const double fy = (y - kCenterY) / id.face_upper_height;
      face = fx * fx + fy * fy <= 1.0;
    } else {
      face = in_polygon(jaw_x, jaw_y, kJawLast + 1, x, y);
    }
    if (!face) return c;
    c = id.skin;

    // Brows.
    constexpr double kBrowHalfThickness = 0.012;
    for (int first : {static_cast<int>(kLeftBrowFirst), static_cast<int>(kRightBrowFirst)}) {
      for (int s = 0; s < 2; ++s) {
        const int a = first + s;
        if (segment_distance2(x, y, lm.x(a), lm.y(a), lm.x(a + 1), lm.y(a + 1)) <=
            kBrowHalfThickness * kBrowHalfThickness) {
          return scale(id.hair, 0.4);
        }
      }
    }

    // Eyes.
    constexpr double kIrisRadius = 0.021;
    double iris2 = 0.0;
    if (in_eye(x, y, kLeftEyeOuter, kLeftEyeTop, kLeftEyeInner, kLeftEyeBottom, iris2) ||
        in_eye(x, y, kRightEyeInner, kRightEyeTop, kRightEyeOuter, kRightEyeBottom, iris2)) {
      if (iris2 <= kIrisRadius * kIrisRadius) {
        return iris2 <= 0.4 * kIrisRadius * kIrisRadius ? Rgb{0.04, 0.03, 0.03} : id.iris;
      }
      return {0.94, 0.93, 0.9};
    }

    // Nose.
    if (segment_distance2(x, y, lm.x(kNoseBridge), lm.y(kNoseBridge), lm.x(kNoseTip), lm.y(kNoseTip)) <=
        0.004 * 0.004) {
      c = scale(id.skin, 0.88);
    }
    if (segment_distance2(x, y, lm.x(kNoseTip), lm.y(kNoseTip), lm.x(kNoseBase), lm.y(kNoseBase)) <=
        0.011 * 0.011) {
      c = scale(id.skin, 0.8);
    }

    // Mouth: lips between the outer curves, cavity between the inner ones.
    const double xl = lm.x(kMouthLeft);
    const double yl = lm.y(kMouthLeft);
    const double xr = lm.x(kMouthRight);
    const double yr = lm.y(kMouthRight);
    if (x > xl && x < xr) {
      auto curve = [&](int center) { return parabola(x, xl, yl, lm.x(center), lm.y(center), xr, yr); };
      const double upper_outer = curve(kUpperLipOuter);
      const double lower_outer = curve(kLowerLipOuter);
      if (y >= upper_outer && y <= lower_outer) {
        const double upper_inner = curve(kUpperLipInner);
        const double lower_inner = curve(kLowerLipInner);
        if (y > upper_inner && y < lower_inner) return {0.22, 0.05, 0.07};
        return id.lips;
      }
    }
    return c;
  }
};

}  // namespace

IdentitySpec IdentitySpec::from_seed(std::uint64_t seed) {
  Rng rng(seed);
  IdentitySpec id;
  id.seed = seed;
  id.face_half_width = rng.uniform(0.25, 0.30);
  id.face_upper_height = rng.uniform(0.30, 0.34);
  id.face_lower_height = rng.uniform(0.32, 0.37);
  id.eye_line = kCenterY - 0.06 + rng.uniform(-0.015, 0.015);
  id.eye_spacing = rng.uniform(0.105, 0.13);
  id.eye_half_width = rng.uniform(0.045, 0.055);
  // Geometry that an expression mode moves varies little across identities,
  // so parameters stay recoverable from a single image.
  id.eye_top = rng.uniform(0.026, 0.028);
  id.eye_bottom = rng.uniform(0.017, 0.019);
  id.brow_gap = rng.uniform(0.066, 0.069);
  id.mouth_line = kCenterY + 0.2 + rng.uniform(-0.01, 0.01);
  id.mouth_half_width = rng.uniform(0.088, 0.092);
  id.upper_lip = rng.uniform(0.02, 0.022);
  id.lower_lip = rng.uniform(0.025, 0.027);
  id.mouth_gap = rng.uniform(0.025, 0.027);

  const double tone = rng.uniform(0.35, 0.95);
  id.skin = {tone, tone * rng.uniform(0.72, 0.82), tone * rng.uniform(0.58, 0.7)};
  const double hr = rng.uniform(0.05, 0.75);
  const double hg = hr * rng.uniform(0.55, 0.95);
  id.hair = {hr, hg, hg * rng.uniform(0.5, 1.0)};
  id.background = {rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
  id.lips = {id.skin[0] * 0.85, id.skin[1] * 0.45, id.skin[2] * 0.5};
  id.iris = {rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
  return id;
}

std::array<double, 8> IdentitySpec::proportions() const {
  return {face_half_width * 2.0 / (face_upper_height + face_lower_height),
          eye_spacing,
          skin[0],
          skin[1],
          skin[2],
          hair[0],
          hair[1],
          hair[2]};
}

const Eigen::MatrixXd& mode_matrix(int num_params) {
  check(num_params >= 1 && num_params <= kMaxParams, "parameter count {} outside [1, {}]", num_params, kMaxParams);
  static const std::vector<Eigen::MatrixXd> kModes = [] {
    const Eigen::MatrixXd all = build_modes();
    std::vector<Eigen::MatrixXd> out(kMaxParams + 1);
    for (int n = 1; n <= kMaxParams; ++n) out[n] = all.leftCols(n);
    return out;
  }();
  return kModes[num_params];
}

std::vector<std::string> mode_labels(int num_params) {
  static const std::array<const char*, kNumNamedModes> kNames = {
      "mouth_curve", "mouth_open", "brow_raise_left", "brow_raise_right",
      "eye_open_left", "eye_open_right", "jaw_shift", "lip_pucker"};
  std::vector<std::string> labels;
  for (int k = 0; k < num_params; ++k) {
    labels.push_back(k < kNumNamedModes ? kNames[k] : fmt::format("aux_{}", k));
  }
  return labels;
}

MeshVector neutral_landmarks(const IdentitySpec& id) {
  MeshVector p = MeshVector::Zero(kCoords);
  auto set = [&](int i, double x, double y) {
    p(3 * i) = x;
    p(3 * i + 1) = y;
  };
  for (int i = kJawFirst; i <= kJawLast; ++i) {
    const double theta = std::numbers::pi - i * std::numbers::pi / 8.0;
    set(i, kCenterX + id.face_half_width * std::cos(theta), kCenterY + id.face_lower_height * std::sin(theta));
  }
  const double brow_y = id.eye_line - id.brow_gap;
  const double lx = kCenterX - id.eye_spacing;
  const double rx = kCenterX + id.eye_spacing;
  const double bw = id.eye_half_width * 1.1;
  set(kLeftBrowFirst + 0, lx - bw, brow_y + 0.01);
  set(kLeftBrowFirst + 1, lx, brow_y - 0.008);
  set(kLeftBrowFirst + 2, lx + bw, brow_y + 0.004);
  set(kRightBrowFirst + 0, rx - bw, brow_y + 0.004);
  set(kRightBrowFirst + 1, rx, brow_y - 0.008);
  set(kRightBrowFirst + 2, rx + bw, brow_y + 0.01);

  set(kLeftEyeOuter, lx - id.eye_half_width, id.eye_line);
  set(kLeftEyeTop, lx, id.eye_line - id.eye_top);
  set(kLeftEyeInner, lx + id.eye_half_width, id.eye_line);
  set(kLeftEyeBottom, lx, id.eye_line + id.eye_bottom);
  set(kRightEyeInner, rx - id.eye_half_width, id.eye_line);
  set(kRightEyeTop, rx, id.eye_line - id.eye_top);
  set(kRightEyeOuter, rx + id.eye_half_width, id.eye_line);
  set(kRightEyeBottom, rx, id.eye_line + id.eye_bottom);

  set(kNoseBridge, kCenterX, id.eye_line + 0.01);
  set(kNoseTip, kCenterX, id.mouth_line - 0.085);
  set(kNoseBase, kCenterX, id.mouth_line - 0.06);

  const double half_gap = 0.5 * id.mouth_gap;
  set(kMouthLeft, kCenterX - id.mouth_half_width, id.mouth_line);
  set(kMouthRight, kCenterX + id.mouth_half_width, id.mouth_line);
  set(kUpperLipOuter, kCenterX, id.mouth_line - half_gap - id.upper_lip);
  set(kUpperLipInner, kCenterX, id.mouth_line - half_gap);
  set(kLowerLipInner, kCenterX, id.mouth_line + half_gap);
  set(kLowerLipOuter, kCenterX, id.mouth_line + half_gap + id.lower_lip);
  return p;
}

FaceLandmarks deform_landmarks(const IdentitySpec& id, const ParameterVector& p) {
  const auto& modes = mode_matrix(p.size());
  return FaceLandmarks{neutral_landmarks(id) + modes * p.values};
}

Eigen::VectorXd project_onto_modes(const IdentitySpec& id, const FaceLandmarks& landmarks, int num_params) {
  const auto& modes = mode_matrix(num_params);
  const Eigen::VectorXd delta = landmarks.points - neutral_landmarks(id);
  return (modes.transpose() * modes).ldlt().solve(modes.transpose() * delta);
}

ImageTensor render_landmarks(const IdentitySpec& id, const FaceLandmarks& landmarks, int height, int width) {
  check(height >= 32 && width >= 32, "render size must be at least 32x32, got {}x{}", height, width);
  check<ShapeError>(landmarks.points.size() == kCoords, "expected {} landmark coordinates", kCoords);
  const Scene scene(id, landmarks);
  ImageTensor image(1, 3, height, width);
  constexpr double kInvSamples = 1.0 / (kSupersample * kSupersample);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      Rgb acc{0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSupersample; ++sy) {
        const double y = (py + (sy + 0.5) / kSupersample) / height;
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double x = (px + (sx + 0.5) / kSupersample) / width;
          const Rgb c = scene.color(x, y);
          acc[0] += c[0];
          acc[1] += c[1];
          acc[2] += c[2];
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        image.at(0, ch, py, px) = static_cast<float>(std::clamp(2.0 * acc[ch] * kInvSamples - 1.0, -1.0, 1.0));
      }
    }
  }
  return image;
}

ImageTensor render_face(const IdentitySpec& id, const ParameterVector& p, int height, int width) {
  return render_landmarks(id, deform_landmarks(id, p), height, width);
}

std::array<double, 4> mouth_box(const FaceLandmarks& landmarks) {
  std::array<double, 4> box{1e9, 1e9, -1e9, -1e9};
  for (int i = kMouthLeft; i <= kLowerLipOuter; ++i) {
    box[0] = std::min(box[0], landmarks.x(i));
    box[1] = std::min(box[1], landmarks.y(i));
    box[2] = std::max(box[2], landmarks.x(i));
    box[3] = std::max(box[3], landmarks.y(i));
  }
  return box;
}

BlendshapeBasis synthetic_mode_basis(int num_params, const std::string& basis_kind) {
  const auto& modes = mode_matrix(num_params);
  BlendshapeBasis basis;
  basis.mean = neutral_landmarks(IdentitySpec{});
  basis.components = modes;
  basis.scales = Eigen::VectorXd::Ones(num_params);
  for (int k = 0; k < num_params; ++k) {
    const double top = modes.col(k).cwiseAbs().maxCoeff();
    basis.components.col(k) /= top;
    basis.scales(k) = top;
  }
  basis.constraint = ConstraintVariant::kAbsMaxOne;
  basis.basis_kind = basis_kind;
  basis.labels = mode_labels(num_params);
  return basis;
}

// --- datasets ---------------------------------------------------------------

void DatasetConfig::validate() const {
  check(n_identities >= 1 && per_identity >= 1, "dataset counts must be >= 1");
  check(paired_fraction >= 0.0 && paired_fraction <= 1.0, "paired_fraction {} outside [0, 1]", paired_fraction);
  check(height >= 32 && width >= 32, "image size must be at least 32x32");
  check(num_params >= kMinParams && num_params <= kMaxParams, "num_params {} outside [{}, {}]", num_params,
        kMinParams, kMaxParams);
  check(gaussian_sigma > 0.0, "gaussian_sigma must be positive");
}

namespace {

Eigen::VectorXd sample_params(Rng& rng, const DatasetConfig& config) {
  Eigen::VectorXd p(config.num_params);
  for (int k = 0; k < config.num_params; ++k) {
    if (config.sampling == ParamSampling::kUniform) {
      p(k) = rng.uniform(-1.0, 1.0);
    } else {
      double v = 0.0;
      do {
        v = config.gaussian_sigma * rng.normal();
      } while (std::abs(v) > 1.0);
      p(k) = v;
    }
  }
  return p;
}

std::string sampling_name(ParamSampling s) { return s == ParamSampling::kUniform ? "uniform" : "truncated_gaussian"; }

ParamSampling sampling_from_name(const std::string& s) {
  if (s == "uniform") return ParamSampling::kUniform;
  if (s == "truncated_gaussian") return ParamSampling::kTruncatedGaussian;
  throw DomainError(fmt::format("unknown parameter sampling '{}'", s));
}

}  // namespace

namespace {

struct SampleDraw {
  int identity_index = 0;
  bool neutral = false;
  std::uint64_t identity_seed = 0;
  Eigen::VectorXd params;
  std::optional<Eigen::VectorXd> target;
};

SampleDraw draw_sample(const DatasetConfig& config, int index) {
  check(index >= 0 && index < config.num_records(), "record index {} out of range", index);
  SampleDraw d;
  d.identity_index = index / config.per_identity;
  d.neutral = config.include_neutral && index % config.per_identity == 0;
  d.identity_seed = derive_seed(config.seed, kIdentityStream, static_cast<std::uint64_t>(d.identity_index));
  Rng rng(derive_seed(config.seed, kRecordStream, static_cast<std::uint64_t>(index)));
  d.params = d.neutral ? Eigen::VectorXd::Zero(config.num_params) : sample_params(rng, config);
  if (rng.uniform() < config.paired_fraction) d.target = sample_params(rng, config);
  return d;
}

}  // namespace

SampleRecord make_sample(const DatasetConfig& config, int index) {
  const SampleDraw d = draw_sample(config, index);
  SampleRecord record;
  record.index = index;
  record.identity_index = d.identity_index;
  record.neutral = d.neutral;
  record.identity = IdentitySpec::from_seed(d.identity_seed);
  record.params = ParameterVector(d.params);
  record.image = render_face(record.identity, record.params, config.height, config.width);
  if (d.target) {
    ParameterVector target(*d.target);
    ImageTensor target_image = render_face(record.identity, target, config.height, config.width);
    record.paired_target.emplace(std::move(target_image), std::move(target));
  }
  return record;
}

ManifestRecord describe_sample(const DatasetConfig& config, int index) {
  const SampleDraw d = draw_sample(config, index);
  ManifestRecord r;
  r.index = index;
  r.image = fmt::format("images/{:06d}.png", index);
  r.params.assign(d.params.data(), d.params.data() + d.params.size());
  r.identity_seed = d.identity_seed;
  r.identity_index = d.identity_index;
  r.neutral = d.neutral;
  if (d.target) {
    r.target_image = fmt::format("images/{:06d}_target.png", index);
    r.target_params = std::vector<double>(d.target->data(), d.target->data() + d.target->size());
  }
  return r;
}

std::string Manifest::serialize() const {
  using nlohmann::json;
  std::string out;
  json header = {{"kind", "slgan-dataset"},
                 {"version", 1},
                 {"n_identities", config.n_identities},
                 {"per_identity", config.per_identity},
                 {"paired_fraction", config.paired_fraction},
                 {"seed", config.seed},
                 {"height", config.height},
                 {"width", config.width},
                 {"num_params", config.num_params},
                 {"sampling", sampling_name(config.sampling)},
                 {"gaussian_sigma", config.gaussian_sigma},
                 {"include_neutral", config.include_neutral}};
  out += header.dump() + "\n";
  for (const auto& r : records) {
    json line = {{"index", r.index},
                 {"image", r.image},
                 {"params", r.params},
                 {"identity_seed", r.identity_seed},
                 {"identity_index", r.identity_index},
                 {"neutral", r.neutral}};
    if (r.target_image) {
      line["target_image"] = *r.target_image;
      line["target_params"] = *r.target_params;
    }
    out += line.dump() + "\n";
  }
  return out;
}

std::string Manifest::hash() const { return sha256_hex(serialize()); }

Manifest Manifest::parse(const std::string& text, const std::string& directory) {
  using nlohmann::json;
  Manifest manifest;
  manifest.directory = directory;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (!have_header) {
        check<IoError>(j.value("kind", "") == "slgan-dataset", "manifest header missing");
        auto& c = manifest.config;
        c.n_identities = j.at("n_identities");
        c.per_identity = j.at("per_identity");
        c.paired_fraction = j.at("paired_fraction");
        c.seed = j.at("seed");
        c.height = j.at("height");
        c.width = j.at("width");
        c.num_params = j.at("num_params");
        c.sampling = sampling_from_name(j.at("sampling"));
        c.gaussian_sigma = j.at("gaussian_sigma");
        c.include_neutral = j.at("include_neutral");
        have_header = true;
        continue;
      }
      ManifestRecord r;
      r.index = j.at("index");
      r.image = j.at("image");
      r.params = j.at("params").get<std::vector<double>>();
      r.identity_seed = j.at("identity_seed");
      r.identity_index = j.at("identity_index");
      r.neutral = j.at("neutral");
      if (j.contains("target_image")) {
        r.target_image = j.at("target_image").get<std::string>();
        r.target_params = j.at("target_params").get<std::vector<double>>();
      }
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError(fmt::format("manifest line {}: {}", line_number, e.what()));
    }
  }
  check<IoError>(have_header, "manifest is empty");
  return manifest;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<IoError>(static_cast<bool>(in), "cannot open manifest '{}'", path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), std::filesystem::path(path).parent_path().string());
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(out), "cannot open '{}' for writing", path);
  out << serialize();
  out.flush();
  check<IoError>(static_cast<bool>(out), "write to '{}' failed", path);
}

Manifest generate_dataset(const DatasetConfig& config, const std::string& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  Manifest manifest;
  manifest.config = config;
  manifest.directory = out_dir;
  try {
    fs::create_directories(fs::path(out_dir) / "images");
  } catch (const fs::filesystem_error& e) {
    throw DatasetWriteError(fmt::format("cannot create dataset directory: {}", e.what()), manifest);
  }
  for (int i = 0; i < config.num_records(); ++i) {
    const SampleRecord sample = make_sample(config, i);
    ManifestRecord r = describe_sample(config, i);
    try {
      write_png(sample.image, (fs::path(out_dir) / r.image).string());
      if (sample.paired_target) write_png(sample.paired_target->first, (fs::path(out_dir) / *r.target_image).string());
    } catch (const IoError& e) {
      throw DatasetWriteError(e.what(), manifest);
    }
    manifest.records.push_back(std::move(r));
  }
  try {
    manifest.save((fs::path(out_dir) / "manifest.jsonl").string());
  } catch (const IoError& e) {
    throw DatasetWriteError(e.what(), manifest);
  }
  return manifest;
}

DifferenceData build_landmark_difference_matrix(const Manifest& manifest) {
  const int n_params = manifest.config.num_params;
  std::map<int, std::uint64_t> neutral_identity;
  for (const auto& r : manifest.records) {
    if (r.neutral) neutral_identity[r.identity_index] = r.identity_seed;
  }
  DifferenceData out;
  std::vector<Eigen::VectorXd> columns;
  std::map<int, bool> warned;
  for (const auto& r : manifest.records) {
    auto it = neutral_identity.find(r.identity_index);
    if (it == neutral_identity.end()) {
      if (!warned[r.identity_index]) {
        out.warnings.push_back(fmt::format("identity {} has no neutral record; skipped", r.identity_index));
        warned[r.identity_index] = true;
      }
      continue;
    }
    check<ShapeError>(static_cast<int>(r.params.size()) == n_params, "record {} has {} params, expected {}",
                      r.index, r.params.size(), n_params);
    // landmarks(id, p) - landmarks(id, 0) is exactly modes * p; evaluating it
    // directly avoids cancellation against the identity's neutral shape.
    columns.push_back(mode_matrix(n_params) * Eigen::Map<const Eigen::VectorXd>(r.params.data(), n_params));
    out.record_indices.push_back(r.index);
  }
  out.matrix = DifferenceMatrix::Zero(kCoords, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.matrix.col(static_cast<Eigen::Index>(j)) = columns[j];
  return out;
}

Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  Dataset data;
  data.manifest = Manifest::load(manifest_path);
  const auto& m = data.manifest;
  const int n = static_cast<int>(m.records.size());
  const int np = m.config.num_params;
  check<IoError>(n > 0, "manifest '{}' has no records", manifest_path);
  data.images = ImageTensor(n, 3, m.config.height, m.config.width);
  data.params.resize(n, np);
  for (int i = 0; i < n; ++i) {
    const auto& r = m.records[i];
    check<IoError>(static_cast<int>(r.params.size()) == np, "record {} has {} params, expected {}", r.index,
                   r.params.size(), np);
    const ImageTensor img = read_png((fs::path(m.directory) / r.image).string());
    check<ShapeError>(img.h() == m.config.height && img.w() == m.config.width, "image {} has wrong size", r.image);
    std::copy(img.data(), img.data() + img.size(), data.images.sample(i));
    for (int k = 0; k < np; ++k) data.params(i, k) = r.params[k];
    if (r.target_image) data.paired.push_back(i);
  }
  data.target_images = ImageTensor(static_cast<int>(data.paired.size()), 3, m.config.height, m.config.width);
  data.target_params.resize(static_cast<Eigen::Index>(data.paired.size()), np);
  for (std::size_t j = 0; j < data.paired.size(); ++j) {
    const auto& r = m.records[data.paired[j]];
    const ImageTensor img = read_png((fs::path(m.directory) / *r.target_image).string());
    std::copy(img.data(), img.data() + img.size(), data.target_images.sample(static_cast<int>(j)));
    for (int k = 0; k < np; ++k) data.target_params(static_cast<Eigen::Index>(j), k) = (*r.target_params)[k];
  }
  return data;
}

}  // namespace slgan::synth
