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

#include "slgan/blendshape.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slgan/archive.hpp"
#include "slgan/common.hpp"
#include "slgan/hash.hpp"

namespace slgan {

std::string to_string(ConstraintVariant variant) {
  return variant == ConstraintVariant::kAbsMaxOne ? "abs_max_one" : "nonneg_max_one";
}

ConstraintVariant constraint_from_string(const std::string& name) {
  if (name == "abs_max_one") return ConstraintVariant::kAbsMaxOne;
  if (name == "nonneg_max_one") return ConstraintVariant::kNonnegMaxOne;
  throw DomainError(fmt::format("unknown constraint variant '{}'", name));
}

void BlendshapeBasis::validate() const {
  check<ShapeError>(mean.size() % 3 == 0, "mean length {} is not divisible by 3", mean.size());
  check<ShapeError>(components.rows() == mean.size(), "components have {} rows, mean has {}", components.rows(),
                    mean.size());
  check<ShapeError>(scales.size() == components.cols(), "{} scales for {} components", scales.size(),
                    components.cols());
  check<ShapeError>(labels.empty() || static_cast<int>(labels.size()) == num_components(),
                    "{} labels for {} components", labels.size(), num_components());
  check(mean.allFinite() && components.allFinite() && scales.allFinite(), "basis has non-finite entries");
  check((scales.array() > 0.0).all(), "basis scales must be strictly positive");
}

double sparse_basis_objective(const DifferenceMatrix& D, const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                              double sparsity_weight) {
  return (D - B * C).squaredNorm() + sparsity_weight * C.rowwise().norm().sum();
}

namespace {

/// Project a column onto the constraint set's "unit maximum" sphere, choosing
/// the sign that keeps most of its mass for the nonnegative variant.
Eigen::VectorXd normalize_component(Eigen::VectorXd b, ConstraintVariant variant) {
  if (variant == ConstraintVariant::kNonnegMaxOne) {
    if ((-b).maxCoeff() > b.maxCoeff()) b = -b;
    b = b.cwiseMax(0.0);
    const double top = b.maxCoeff();
    return top > 0.0 ? Eigen::VectorXd(b / top) : b;
  }
  const double top = b.cwiseAbs().maxCoeff();
  return top > 0.0 ? Eigen::VectorXd(b / top) : b;
}

Eigen::VectorXd leading_direction(const Eigen::MatrixXd& E, Eigen::Index fallback) {
  if (E.squaredNorm() > 0.0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(E, Eigen::ComputeThinU);
    return svd.matrixU().col(0);
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(E.rows());
  e(fallback % E.rows()) = 1.0;
  return e;
}

}  // namespace

SparseBasisResult build_sparse_basis(const DifferenceMatrix& D, const SparseBasisOptions& options) {
  const Eigen::Index rows = D.rows();
  const Eigen::Index m = D.cols();
  const int h = options.num_components;
  const double w = options.sparsity_weight;
  check(D.allFinite(), "difference matrix has non-finite entries");
  check<ShapeError>(rows > 0 && rows % 3 == 0, "difference matrix needs 3n rows, got {}", rows);
  check(h >= 1 && h <= m, "need 1 <= h <= m, got h = {}, m = {}", h, m);
  check(w >= 0.0 && std::isfinite(w), "sparsity weight must be finite and >= 0");
  check(options.max_iters >= 1, "max_iters must be >= 1");

  SparseBasisResult result;
  auto& basis = result.basis;
  basis.mean = MeshVector::Zero(rows);
  basis.constraint = options.constraint;
  basis.components = Eigen::MatrixXd::Zero(rows, h);
  basis.scales = Eigen::VectorXd::Ones(h);
  result.coefficients = Eigen::MatrixXd::Zero(h, m);

  if (D.squaredNorm() == 0.0) {
    result.zero_data = true;
    result.converged = true;
    result.objective_trace = {0.0};
    return result;
  }

  Eigen::MatrixXd& B = basis.components;
  Eigen::MatrixXd& C = result.coefficients;
  {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU);
    const Eigen::MatrixXd& U = svd.matrixU();
    for (int k = 0; k < h; ++k) {
      Eigen::VectorXd u;
      if (k < U.cols()) {
        u = U.col(k);
      } else {
        u = Eigen::VectorXd::Zero(rows);
        u(k % rows) = 1.0;
      }
      B.col(k) = normalize_component(u, options.constraint);
    }
  }

  const double lo = options.constraint == ConstraintVariant::kNonnegMaxOne ? 0.0 : -1.0;
  Eigen::MatrixXd E = D;  // residual D - B C, with C = 0 initially
  double previous = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < options.max_iters; ++iter) {
    // Coefficient rows: exact minimization of each group-lasso block.
    for (int k = 0; k < h; ++k) {
      const double bnorm2 = B.col(k).squaredNorm();
      E.noalias() += B.col(k) * C.row(k);
      if (bnorm2 == 0.0) {
        C.row(k).setZero();
        continue;
      }
      Eigen::RowVectorXd c = (B.col(k).transpose() * E) / bnorm2;
      const double cnorm = c.norm();
      const double shrink = cnorm > 0.0 ? std::max(0.0, 1.0 - w / (2.0 * bnorm2 * cnorm)) : 0.0;
      C.row(k) = shrink * c;
      E.noalias() -= B.col(k) * C.row(k);
    }

    // Component columns: least squares clamped to the constraint box.
    for (int k = 0; k < h; ++k) {
      const double cnorm2 = C.row(k).squaredNorm();
      if (cnorm2 == 0.0) continue;
      E.noalias() += B.col(k) * C.row(k);
      Eigen::VectorXd b = ((E * C.row(k).transpose()) / cnorm2).cwiseMax(lo).cwiseMin(1.0);
      if (b.cwiseAbs().maxCoeff() == 0.0) {
        // Degenerate column: restart it from the residual's leading direction
        // with a zero coefficient row, which leaves the objective unchanged.
        B.col(k) = normalize_component(leading_direction(E, k), options.constraint);
        C.row(k).setZero();
        continue;
      }
      B.col(k) = b;
      E.noalias() -= B.col(k) * C.row(k);
    }

    // Unit-maximum rescale; compensating the coefficients keeps the residual
    // and shrinks the penalty, since every clamped column has maximum <= 1.
    for (int k = 0; k < h; ++k) {
      const double top = options.constraint == ConstraintVariant::kNonnegMaxOne ? B.col(k).maxCoeff()
                                                                                  : B.col(k).cwiseAbs().maxCoeff();
      if (top > 0.0 && top != 1.0) {
        B.col(k) /= top;
        C.row(k) *= top;
      }
    }

    E = D - B * C;
    const double objective = E.squaredNorm() + w * C.rowwise().norm().sum();
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (std::isfinite(previous) && previous - objective <= options.tol * std::max(previous, 1e-300)) {
      result.converged = true;
      break;
    }
    previous = objective;
  }

  for (int k = 0; k < h; ++k) {
    const double rms = C.row(k).norm() / std::sqrt(static_cast<double>(m));
    basis.scales(k) = rms > 0.0 ? rms : 1.0;
  }
  return result;
}

MeshVector instantiate_shape(const BlendshapeBasis& basis, const ParameterVector& p) {
  check<ShapeError>(p.size() == basis.num_components(), "parameter vector has {} entries, basis has {} components",
                    p.size(), basis.num_components());
  return basis.mean + basis.components * p.values.cwiseProduct(basis.scales);
}

ParameterVector project_parameters(const BlendshapeBasis& basis, const MeshVector& shape) {
  check<ShapeError>(shape.size() == basis.mean.size(), "shape has {} coordinates, basis has {}", shape.size(),
                    basis.mean.size());
  Eigen::VectorXd p = (basis.components.transpose() * (shape - basis.mean)).cwiseQuotient(basis.scales);
  return ParameterVector(std::move(p), basis.basis_kind);
}

ParameterVector interpolate_parameters(const ParameterVector& p_src, const ParameterVector& p_trg, double a) {
  check<ShapeError>(p_src.size() == p_trg.size(), "cannot interpolate vectors of length {} and {}", p_src.size(),
                    p_trg.size());
  check(p_src.basis_kind == p_trg.basis_kind, "cannot interpolate '{}' and '{}' parameters", p_src.basis_kind,
        p_trg.basis_kind);
  check(a >= 0.0 && a <= 1.0, "interpolation factor {} outside [0, 1]", a);
  return ParameterVector(a * p_src.values + (1.0 - a) * p_trg.values, p_src.basis_kind);
}

ParameterVector clamp_normalized(const ParameterVector& p) {
  return ParameterVector(p.values.cwiseMax(-1.0).cwiseMin(1.0), p.basis_kind);
}

BlendshapeBasis orthonormalized(const BlendshapeBasis& basis) {
  BlendshapeBasis out = basis;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis.components);
  out.components = qr.householderQ() * Eigen::MatrixXd::Identity(basis.components.rows(), basis.components.cols());
  out.scales = Eigen::VectorXd::Ones(basis.num_components());
  return out;
}

namespace {

std::vector<double> to_std(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace

std::vector<std::uint8_t> serialize_basis(const BlendshapeBasis& basis) {
  basis.validate();
  Archive archive;
  archive.put_text("meta", format_metadata({{"format", "slgan-basis"},
                                            {"version", "1"},
                                            {"n", std::to_string(basis.num_points())},
                                            {"h", std::to_string(basis.num_components())},
                                            {"basis_kind", basis.basis_kind},
                                            {"constraint_variant", to_string(basis.constraint)},
                                            {"dataset_hash", basis.dataset_hash}}));
  std::string labels;
  for (const auto& label : basis.labels) labels += label + "\n";
  archive.put_text("labels", labels);
  archive.put_f64("mean", to_std(basis.mean));
  archive.put_f64("components", to_std(basis.components));
  archive.put_f64("scales", to_std(basis.scales));
  return archive.serialize();
}

BlendshapeBasis deserialize_basis(const std::vector<std::uint8_t>& bytes) {
  const Archive archive = Archive::deserialize(bytes);
  const auto meta = parse_metadata(archive.text("meta"));
  auto field = [&](const std::string& key) {
    auto it = meta.find(key);
    check<IoError>(it != meta.end(), "basis metadata lacks '{}'", key);
    return it->second;
  };
  check<IoError>(field("format") == "slgan-basis", "archive is not a basis file");
  check<IoError>(field("version") == "1", "unsupported basis version {}", field("version"));
  const int n = std::stoi(field("n"));
  const int h = std::stoi(field("h"));

  BlendshapeBasis basis;
  basis.basis_kind = field("basis_kind");
  basis.constraint = constraint_from_string(field("constraint_variant"));
  basis.dataset_hash = field("dataset_hash");
  const auto& mean = archive.f64("mean");
  const auto& comps = archive.f64("components");
  const auto& scales = archive.f64("scales");
  check<IoError>(mean.size() == static_cast<std::size_t>(3 * n) &&
                     comps.size() == static_cast<std::size_t>(3 * n) * static_cast<std::size_t>(h) &&
                     scales.size() == static_cast<std::size_t>(h),
                 "basis arrays do not match n = {}, h = {}", n, h);
  basis.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), 3 * n);
  basis.components = Eigen::Map<const Eigen::MatrixXd>(comps.data(), 3 * n, h);
  basis.scales = Eigen::Map<const Eigen::VectorXd>(scales.data(), h);
  std::istringstream labels(archive.text("labels"));
  for (std::string line; std::getline(labels, line);) basis.labels.push_back(line);
  basis.validate();
  return basis;
}

void save_basis(const BlendshapeBasis& basis, const std::string& path) {
  Archive::deserialize(serialize_basis(basis)).write(path);
}

BlendshapeBasis load_basis(const std::string& path) { return deserialize_basis(Archive::read(path).serialize()); }

std::string basis_hash(const BlendshapeBasis& basis) { return sha256_hex(serialize_basis(basis)); }

}  // namespace slgan
