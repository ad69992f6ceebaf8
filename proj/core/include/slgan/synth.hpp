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

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slgan/blendshape.hpp"
#include "slgan/common.hpp"
#include "slgan/image.hpp"

/// Procedural faces with exact ground truth. Geometry lives in normalized
/// image coordinates ([0, 1]^2, x right, y down) so one landmark set renders
/// at any resolution.
namespace slgan::synth {

inline constexpr int kNumLandmarks = 32;
inline constexpr int kNumNamedModes = 8;
inline constexpr int kMaxParams = 30;
inline constexpr int kMinParams = 4;

/// Landmark layout. Jaw points run from the left temple through the chin to
/// the right temple; "left" means image left.
enum LandmarkIndex : int {
  kJawFirst = 0,
  kChin = 4,
  kJawLast = 8,
  kLeftBrowFirst = 9,   // outer, mid, inner
  kRightBrowFirst = 12, // inner, mid, outer
  kLeftEyeOuter = 15,
  kLeftEyeTop = 16,
  kLeftEyeInner = 17,
  kLeftEyeBottom = 18,
  kRightEyeInner = 19,
  kRightEyeTop = 20,
  kRightEyeOuter = 21,
  kRightEyeBottom = 22,
  kNoseBridge = 23,
  kNoseTip = 24,
  kNoseBase = 25,
  kMouthLeft = 26,
  kMouthRight = 27,
  kUpperLipOuter = 28,
  kUpperLipInner = 29,
  kLowerLipInner = 30,
  kLowerLipOuter = 31,
};

using Rgb = std::array<double, 3>;

/// Identity proportions and colours, all derived from the seed.
struct IdentitySpec {
  std::uint64_t seed = 0;
  double face_half_width = 0.27;
  double face_upper_height = 0.32;
  double face_lower_height = 0.34;
  double eye_line = 0.42;
  double eye_spacing = 0.115;  ///< eye centre distance from the midline
  double eye_half_width = 0.05;
  double eye_top = 0.027;
  double eye_bottom = 0.018;
  double brow_gap = 0.068;
  double mouth_line = 0.68;
  double mouth_half_width = 0.09;
  double upper_lip = 0.021;
  double lower_lip = 0.026;
  double mouth_gap = 0.026;
  Rgb skin{};
  Rgb hair{};
  Rgb background{};
  Rgb lips{};
  Rgb iris{};

  static IdentitySpec from_seed(std::uint64_t seed);

  /// Fixed-length summary: face width/height ratio, eye spacing, skin and hair tones.
  std::array<double, 8> proportions() const;
};

struct FaceLandmarks {
  MeshVector points;  ///< 3 * kNumLandmarks, z = 0

  double x(int i) const { return points(3 * i); }
  double y(int i) const { return points(3 * i + 1); }
};

/// Orthogonal deformation modes as columns of a (3 * kNumLandmarks) x N
/// matrix. The first eight are the named modes; further columns are seeded
/// random displacements orthogonalized against the earlier ones.
const Eigen::MatrixXd& mode_matrix(int num_params);
std::vector<std::string> mode_labels(int num_params);

MeshVector neutral_landmarks(const IdentitySpec& id);

/// neutral(id) + modes * p, exactly linear in p.
FaceLandmarks deform_landmarks(const IdentitySpec& id, const ParameterVector& p);

/// Recover p from landmarks by least squares against the mode matrix.
Eigen::VectorXd project_onto_modes(const IdentitySpec& id, const FaceLandmarks& landmarks, int num_params);

/// Anti-aliased rasterization (4x4 supersampling, box filter).
ImageTensor render_landmarks(const IdentitySpec& id, const FaceLandmarks& landmarks, int height, int width);
ImageTensor render_face(const IdentitySpec& id, const ParameterVector& p, int height, int width);

/// Axis-aligned box around the mouth landmarks in normalized coordinates:
/// {xmin, ymin, xmax, ymax}.
std::array<double, 4> mouth_box(const FaceLandmarks& landmarks);

/// Blendshape basis whose components are exactly the generator's modes, with
/// the average neutral shape as mean and unit scales.
BlendshapeBasis synthetic_mode_basis(int num_params, const std::string& basis_kind = "expression");

// --- datasets ---------------------------------------------------------------

enum class ParamSampling { kUniform, kTruncatedGaussian };

struct DatasetConfig {
  int n_identities = 100;
  int per_identity = 20;
  double paired_fraction = 0.5;
  std::uint64_t seed = 1;
  int height = 64;
  int width = 64;
  int num_params = kNumNamedModes;
  ParamSampling sampling = ParamSampling::kUniform;
  double gaussian_sigma = 0.5;
  bool include_neutral = true;  ///< first record of every identity has p = 0

  int num_records() const { return n_identities * per_identity; }
  void validate() const;
};

struct SampleRecord {
  int index = 0;
  int identity_index = 0;
  bool neutral = false;
  ImageTensor image;
  ParameterVector params;
  IdentitySpec identity;
  std::optional<std::pair<ImageTensor, ParameterVector>> paired_target;
};

struct ManifestRecord {
  int index = 0;
  std::string image;  ///< path relative to the manifest directory
  std::vector<double> params;
  std::uint64_t identity_seed = 0;
  int identity_index = 0;
  bool neutral = false;
  std::optional<std::string> target_image;
  std::optional<std::vector<double>> target_params;
};

/// JSON-lines manifest: a header line with the generating config followed by
/// one line per record. Its SHA-256 is the dataset identity.
struct Manifest {
  DatasetConfig config;
  std::vector<ManifestRecord> records;
  std::string directory;  ///< where relative image paths resolve

  std::string serialize() const;
  std::string hash() const;
  static Manifest parse(const std::string& text, const std::string& directory);
  static Manifest load(const std::string& path);
  void save(const std::string& path) const;
};

/// Record `index` of the stream defined by `config`. Each record draws from
/// its own counter-derived RNG stream.
SampleRecord make_sample(const DatasetConfig& config, int index);

/// The manifest line of record `index` (labels and file names) without rendering.
ManifestRecord describe_sample(const DatasetConfig& config, int index);

class DatasetWriteError : public IoError {
 public:
  DatasetWriteError(const std::string& what, Manifest partial) : IoError(what), partial_(std::move(partial)) {}
  const Manifest& partial() const { return partial_; }

 private:
  Manifest partial_;
};

/// Render all records to `out_dir`/images and write `out_dir`/manifest.jsonl.
/// Throws DatasetWriteError carrying the records written so far on failure.
Manifest generate_dataset(const DatasetConfig& config, const std::string& out_dir);

struct DifferenceData {
  DifferenceMatrix matrix;
  std::vector<int> record_indices;  ///< manifest record behind each column
  std::vector<std::string> warnings;
};

/// Columns landmarks(id, p) - landmarks(id, 0) for every record whose
/// identity has a neutral record in the manifest.
DifferenceData build_landmark_difference_matrix(const Manifest& manifest);

/// Images and labels of a manifest loaded into memory.
struct Dataset {
  Manifest manifest;
  ImageTensor images;
  Eigen::MatrixXd params;   ///< records x N
  std::vector<int> paired;  ///< record indices carrying a target
  ImageTensor target_images;
  Eigen::MatrixXd target_params;

  int size() const { return images.n(); }
  int num_params() const { return static_cast<int>(params.cols()); }
};

Dataset load_dataset(const std::string& manifest_path);

}  // namespace slgan::synth
