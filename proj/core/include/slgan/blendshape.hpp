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

#include <cstdint>
#include <string>
#include <vector>

#include "slgan/common.hpp"

namespace slgan {

/// Stacked xyz coordinates of n points (2D landmarks carry z = 0).
using MeshVector = Eigen::VectorXd;

/// 3n x m matrix of expressive-minus-neutral difference vectors.
using DifferenceMatrix = Eigen::MatrixXd;

enum class ConstraintVariant {
  kAbsMaxOne,     ///< max |B_k| = 1
  kNonnegMaxOne,  ///< B_k >= 0 and max B_k = 1
};

std::string to_string(ConstraintVariant variant);
ConstraintVariant constraint_from_string(const std::string& name);

/// Blendshape parameters. Values are in normalized form (divided by the
/// basis scales); the [-1, 1] range is enforced only at API boundaries.
struct ParameterVector {
  Eigen::VectorXd values;
  std::string basis_kind = "expression";

  ParameterVector() = default;
  explicit ParameterVector(Eigen::VectorXd v, std::string kind = "expression")
      : values(std::move(v)), basis_kind(std::move(kind)) {}

  int size() const { return static_cast<int>(values.size()); }
  static ParameterVector zeros(int n, std::string kind = "expression") {
    return ParameterVector(Eigen::VectorXd::Zero(n), std::move(kind));
  }
};

struct BlendshapeBasis {
  MeshVector mean;
  Eigen::MatrixXd components;  ///< 3n x h, one spatial mode per column
  Eigen::VectorXd scales;      ///< h, strictly positive
  ConstraintVariant constraint = ConstraintVariant::kAbsMaxOne;
  std::string basis_kind = "expression";
  std::vector<std::string> labels;  ///< optional human-readable name per component
  std::string dataset_hash;         ///< manifest the basis was built from, if any

  int num_components() const { return static_cast<int>(components.cols()); }
  int num_points() const { return static_cast<int>(mean.size() / 3); }

  /// Throws if dimensions disagree, entries are non-finite or scales are not positive.
  void validate() const;
};

struct SparseBasisOptions {
  int num_components = 8;
  double sparsity_weight = 0.0;
  ConstraintVariant constraint = ConstraintVariant::kAbsMaxOne;
  int max_iters = 500;
  double tol = 1e-8;
};

struct SparseBasisResult {
  BlendshapeBasis basis;
  Eigen::MatrixXd coefficients;        ///< h x m
  std::vector<double> objective_trace;  ///< objective after every outer iteration
  int iterations = 0;
  bool converged = false;
  bool zero_data = false;  ///< D was identically zero; components are zero
};

/// Objective minimized by build_sparse_basis: squared Frobenius residual plus
/// sparsity_weight times the sum of coefficient-row l2 norms.
double sparse_basis_objective(const DifferenceMatrix& D, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                              double sparsity_weight);

/// Sparse, localized blendshape construction by alternating minimization.
///
/// Minimizes ||D - B C||_F^2 + w * sum_k ||C_k||_2 with every column of B
/// constrained to unit maximum (absolute or nonnegative variant). Both blocks
/// are updated by exact block-coordinate minimization: coefficient rows by
/// least squares followed by group soft-thresholding, component columns by
/// least squares clamped to the constraint box. Columns are then rescaled to
/// reach the unit maximum exactly, shrinking their coefficient rows, which can
/// only lower the penalty. The objective is therefore nonincreasing.
///
/// The returned basis has a zero mean; callers that know the neutral shape
/// set it afterwards. Scales are the RMS of each coefficient row.
SparseBasisResult build_sparse_basis(const DifferenceMatrix& D, const SparseBasisOptions& options);

/// mean + components * (p .* scales); p is normalized.
MeshVector instantiate_shape(const BlendshapeBasis& basis, const ParameterVector& p);

/// components^T (S - mean) ./ scales.
ParameterVector project_parameters(const BlendshapeBasis& basis, const MeshVector& shape);

/// a * p_src + (1 - a) * p_trg, so a = 1 reproduces the source.
ParameterVector interpolate_parameters(const ParameterVector& p_src, const ParameterVector& p_trg, double a);

ParameterVector clamp_normalized(const ParameterVector& p);

/// Replace the components by an orthonormal basis of their span with unit
/// scales. Used where exact projection round trips are needed.
BlendshapeBasis orthonormalized(const BlendshapeBasis& basis);

void save_basis(const BlendshapeBasis& basis, const std::string& path);
BlendshapeBasis load_basis(const std::string& path);
std::vector<std::uint8_t> serialize_basis(const BlendshapeBasis& basis);
BlendshapeBasis deserialize_basis(const std::vector<std::uint8_t>& bytes);
/// SHA-256 of the serialized basis.
std::string basis_hash(const BlendshapeBasis& basis);

}  // namespace slgan
