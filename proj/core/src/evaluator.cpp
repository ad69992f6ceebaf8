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

#include "slgan/evaluator.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

#include "slgan/rng.hpp"

namespace slgan::eval {

namespace {

constexpr std::uint64_t kPairStream = 0x7a;

std::vector<double> gaussian_taps(const IedOptions& o) {
  const int r = o.radius();
  std::vector<double> taps(2 * r + 1);
  for (int t = -r; t <= r; ++t) taps[t + r] = std::exp(-(t * t) / (2.0 * o.sigma * o.sigma));
  return taps;
}

double ied_sample(const ImageTensor& x, const ImageTensor& y, int n, const std::vector<double>& taps) {
  const int h = x.h(), w = x.w();
  const int r = static_cast<int>(taps.size() / 2);
  std::vector<double> d(static_cast<std::size_t>(h) * w), tmp(d.size()), kd(d.size());
  double total = 0.0;
  for (int c = 0; c < x.c(); ++c) {
    const float* xc = x.channel(n, c);
    const float* yc = y.channel(n, c);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(xc[i]) - yc[i];
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        double s = 0.0;
        for (int t = std::max(-r, -col); t <= std::min(r, w - 1 - col); ++t) s += taps[t + r] * d[row * w + col + t];
        tmp[row * w + col] = s;
      }
    }
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        double s = 0.0;
        for (int t = std::max(-r, -row); t <= std::min(r, h - 1 - row); ++t) s += taps[t + r] * tmp[(row + t) * w + col];
        kd[row * w + col] = s;
      }
    }
    for (std::size_t i = 0; i < d.size(); ++i) total += d[i] * kd[i];
  }
  return total / (2.0 * std::numbers::pi);
}

double cosine(const float* a, const float* b, int n) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int k = 0; k < n; ++k) {
    ab += double(a[k]) * b[k];
    aa += double(a[k]) * a[k];
    bb += double(b[k]) * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

ImageTensor gather(const ImageTensor& images, const std::vector<int>& indices) {
  std::vector<ImageTensor> parts;
  parts.reserve(indices.size());
  for (int i : indices) parts.push_back(images.slice(i));
  return nn::stack(parts);
}

Eigen::VectorXd labels_of(const synth::Dataset& data, int record) { return data.params.row(record).transpose(); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

}  // namespace

int IedOptions::radius() const {
  check(sigma > 0.0 && truncation > 0.0, "IED needs sigma > 0 and truncation > 0");
  return static_cast<int>(std::ceil(truncation * sigma));
}

std::vector<double> image_euclidean_distances(const ImageTensor& x, const ImageTensor& y, const IedOptions& options) {
  check<ShapeError>(x.shape() == y.shape(), "IED shape mismatch: {} vs {}", x.shape().str(), y.shape().str());
  const auto taps = gaussian_taps(options);
  std::vector<double> out(x.n());
  for (int n = 0; n < x.n(); ++n) out[n] = ied_sample(x, y, n, taps);
  return out;
}

double image_euclidean_distance(const ImageTensor& x, const ImageTensor& y, const IedOptions& options) {
  check<ShapeError>(x.n() == 1, "image_euclidean_distance compares single images; use the batched form");
  return image_euclidean_distances(x, y, options)[0];
}

double image_euclidean_distance_brute_force(const ImageTensor& x, const ImageTensor& y, const IedOptions& options,
                                            bool truncate) {
  check<ShapeError>(x.shape() == y.shape() && x.n() == 1, "brute-force IED compares two single images");
  const int h = x.h(), w = x.w(), r = options.radius();
  const int p = h * w;
  double total = 0.0;
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      const int dy = i / w - j / w, dx = i % w - j % w;
      if (truncate && (std::abs(dx) > r || std::abs(dy) > r)) continue;
      const double k = std::exp(-(dx * dx + dy * dy) / (2.0 * options.sigma * options.sigma));
      double dot = 0.0;
      for (int c = 0; c < x.c(); ++c) {
        dot += (double(x.channel(0, c)[i]) - y.channel(0, c)[i]) * (double(x.channel(0, c)[j]) - y.channel(0, c)[j]);
      }
      total += k * dot;
    }
  }
  return total / (2.0 * std::numbers::pi);
}

void EvalReport::set(const std::string& name, double value) {
  for (auto& [k, v] : metrics) {
    if (k == name) {
      v = value;
      return;
    }
  }
  metrics.emplace_back(name, value);
}

double EvalReport::get(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  throw DomainError(fmt::format("report has no metric '{}'", name));
}

bool EvalReport::has(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return true;
  return false;
}

bool EvalReport::all_finite() const {
  for (const auto& [k, v] : metrics)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  j["metrics"] = m;
  j["samples"] = samples;
  j["excluded"] = excluded;
  j["config_hash"] = config_hash;
  return j.dump(2);
}

RegressionStats relative_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  check<ShapeError>(truth.rows() == estimate.rows() && truth.cols() == estimate.cols(),
                    "regression shapes differ: {}x{} vs {}x{}", truth.rows(), truth.cols(), estimate.rows(),
                    estimate.cols());
  RegressionStats s;
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    const double norm = truth.row(i).norm();
    if (norm < 1e-6) {
      ++s.excluded;
      continue;
    }
    total += (truth.row(i) - estimate.row(i)).norm() / norm;
    ++s.count;
  }
  s.mean_relative_error = s.count ? total / s.count : 0.0;
  return s;
}

std::string to_string(RegressionMode mode) { return mode == RegressionMode::kVsTruth ? "vs_truth" : "consistency"; }

RegressionMode regression_mode_from_string(const std::string& name) {
  if (name == "vs_truth" || name == "truth") return RegressionMode::kVsTruth;
  if (name == "consistency") return RegressionMode::kConsistency;
  throw DomainError(fmt::format("unknown regression mode '{}' (expected vs_truth or consistency)", name));
}

Eigen::MatrixXd draw_targets(int rows, int num_params, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(rows, num_params);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < num_params; ++k) out(i, k) = rng.uniform(-1.0, 1.0);
  return out;
}

EvalReport regression_error_report(const InferenceModel& model, const ImageTensor& images,
                                   const Eigen::MatrixXd& labels, RegressionMode mode, std::uint64_t seed) {
  EvalReport report;
  report.config_hash = model.meta().config_hash;
  RegressionStats stats;
  if (mode == RegressionMode::kVsTruth) {
    stats = relative_error(labels, model.regress(images));
  } else {
    const Eigen::MatrixXd targets = draw_targets(images.n(), model.num_params(), seed);
    stats = relative_error(targets, model.edit(images, targets).p_est);
  }
  report.set(to_string(mode) + "_relative_error", stats.mean_relative_error);
  report.samples = stats.count;
  report.excluded = stats.excluded;
  return report;
}

ImageTensor ground_truth_render(const synth::Manifest& manifest, int record, const Eigen::VectorXd& params) {
  const auto& rec = manifest.records.at(record);
  const auto id = synth::IdentitySpec::from_seed(rec.identity_seed);
  return quantize_8bit(
      synth::render_face(id, ParameterVector(params), manifest.config.height, manifest.config.width));
}

std::vector<TransferPair> choose_pairs(const synth::Dataset& data, int count, std::uint64_t seed) {
  const int n = data.size();
  std::vector<TransferPair> pairs;
  Rng rng(derive_seed(seed, kPairStream));
  int attempts = 0;
  while (static_cast<int>(pairs.size()) < count) {
    check(++attempts < 100 * (count + 10), "cannot find {} transfer pairs in {} records", count, n);
    const int s = static_cast<int>(rng.index(n));
    const int t = static_cast<int>(rng.index(n));
    if (data.manifest.records[s].identity_index == data.manifest.records[t].identity_index) continue;
    if (data.params.row(t).norm() < 1e-6) continue;
    pairs.push_back({s, t});
  }
  return pairs;
}

TransferOutput transfer_harness(const InferenceModel& model, const synth::Dataset& data,
                                const std::vector<TransferPair>& pairs, bool with_strips, const IedOptions& ied) {
  check(!pairs.empty(), "transfer harness needs at least one pair");
  std::vector<int> src_idx, trg_idx;
  for (const auto& p : pairs) {
    src_idx.push_back(p.source);
    trg_idx.push_back(p.target);
  }
  const ImageTensor sources = gather(data.images, src_idx);
  const ImageTensor targets = gather(data.images, trg_idx);
  const Eigen::MatrixXd p_trg = model.regress(targets);
  const EditResult gen = model.edit(sources, p_trg);

  std::vector<ImageTensor> truth;
  Eigen::MatrixXd trg_labels(pairs.size(), data.num_params());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    trg_labels.row(i) = data.params.row(pairs[i].target);
    truth.push_back(ground_truth_render(data.manifest, pairs[i].source, labels_of(data, pairs[i].target)));
  }
  const ImageTensor gt = nn::stack(truth);
  const auto transfer = image_euclidean_distances(gen.image, gt, ied);
  const auto baseline = image_euclidean_distances(sources, gt, ied);

  TransferOutput out;
  out.report.config_hash = model.meta().config_hash;
  out.report.samples = static_cast<int>(pairs.size());
  out.report.set("mean_transfer_ied", mean(transfer));
  out.report.set("mean_source_ied", mean(baseline));
  out.report.set("transfer_ied_reduction", 1.0 - mean(transfer) / mean(baseline));
  out.report.set("target_regression_error", relative_error(trg_labels, p_trg).mean_relative_error);
  out.report.set("transfer_param_error", relative_error(trg_labels, gen.p_est).mean_relative_error);

  if (with_strips) {
    const Eigen::MatrixXd p_src = model.regress(sources);
    std::vector<EditResult> frames;
    for (int s = 0; s < kStripSteps; ++s) {
      const double a = static_cast<double>(s) / (kStripSteps - 1);
      frames.push_back(model.edit(sources, (a * p_src + (1.0 - a) * p_trg).eval()));
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::vector<ImageTensor> row{sources.slice(static_cast<int>(i))};
      for (const auto& f : frames) row.push_back(f.image.slice(static_cast<int>(i)));
      row.push_back(targets.slice(static_cast<int>(i)));
      out.strips.push_back(contact_sheet(row, static_cast<int>(row.size())));
    }
  }
  return out;
}

double self_transfer_ied(const InferenceModel& model, const synth::Dataset& data, int record, const IedOptions& ied) {
  const ImageTensor image = data.images.slice(record);
  const EditResult out = model.edit(image, model.regress(image));
  return image_euclidean_distance(out.image, ground_truth_render(data.manifest, record, labels_of(data, record)), ied);
}

NeutralizeOutput neutralize(const InferenceModel& model, const synth::Dataset& data, const std::vector<int>& records,
                            const IedOptions& ied) {
  check(!records.empty(), "neutralize needs at least one record");
  const ImageTensor inputs = gather(data.images, records);
  const EditResult out = model.neutralize(inputs);
  std::vector<ImageTensor> neutral;
  for (int r : records) neutral.push_back(ground_truth_render(data.manifest, r, Eigen::VectorXd::Zero(data.num_params())));
  const ImageTensor gt = nn::stack(neutral);
  const auto out_ied = image_euclidean_distances(out.image, gt, ied);
  const auto in_ied = image_euclidean_distances(inputs, gt, ied);
  double max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) max_excess = std::max(max_excess, out_ied[i] - in_ied[i]);
  const Eigen::MatrixXd p_in = model.regress(inputs);

  NeutralizeOutput result;
  result.report.config_hash = model.meta().config_hash;
  result.report.samples = static_cast<int>(records.size());
  result.report.set("mean_output_ied", mean(out_ied));
  result.report.set("mean_input_ied", mean(in_ied));
  result.report.set("max_ied_excess", max_excess);
  result.report.set("mean_output_param_norm", out.p_est.rowwise().norm().mean());
  result.report.set("mean_input_param_norm", p_in.rowwise().norm().mean());
  for (int i = 0; i < out.image.n(); ++i) result.outputs.push_back(out.image.slice(i));
  return result;
}

std::vector<int> expressive_records(const synth::Dataset& data, int count) {
  std::vector<int> out;
  for (int i = 0; i < data.size() && static_cast<int>(out.size()) < count; ++i)
    if (data.params.row(i).norm() >= 1e-6) out.push_back(i);
  return out;
}

std::vector<int> neutral_records(const synth::Dataset& data, int count) {
  std::vector<int> out;
  for (int i = 0; i < data.size() && static_cast<int>(out.size()) < count; ++i)
    if (data.params.row(i).norm() < 1e-6) out.push_back(i);
  return out;
}

double identity_cosine(const InferenceModel& model, const nn::Embedder<float>& embedder, const synth::Dataset& data,
                       const std::vector<TransferPair>& pairs) {
  check(!pairs.empty(), "identity cosine needs at least one pair");
  std::vector<int> src_idx, trg_idx;
  for (const auto& p : pairs) {
    src_idx.push_back(p.source);
    trg_idx.push_back(p.target);
  }
  const ImageTensor sources = gather(data.images, src_idx);
  const EditResult gen = model.edit(sources, model.regress(gather(data.images, trg_idx)));
  const auto e_src = embedder.forward(model.prepare(sources));
  const auto e_gen = embedder.forward(gen.image);
  const int d = e_src.c();
  double total = 0.0;
  for (int i = 0; i < e_src.n(); ++i) total += cosine(e_src.sample(i), e_gen.sample(i), d);
  return total / e_src.n();
}

std::pair<double, double> embedding_separation(const nn::Embedder<float>& embedder, const synth::Dataset& data,
                                               int pairs, std::uint64_t seed) {
  const auto e = embedder.forward(data.images);
  const int n = data.size(), d = e.c();
  Rng rng(seed);
  double same = 0.0, cross = 0.0;
  int n_same = 0, n_cross = 0, attempts = 0;
  while ((n_same < pairs || n_cross < pairs) && ++attempts < 1000 * (pairs + 10)) {
    const int a = static_cast<int>(rng.index(n)), b = static_cast<int>(rng.index(n));
    if (a == b) continue;
    const bool same_id = data.manifest.records[a].identity_index == data.manifest.records[b].identity_index;
    if (same_id && n_same < pairs) {
      same += cosine(e.sample(a), e.sample(b), d);
      ++n_same;
    } else if (!same_id && n_cross < pairs) {
      cross += cosine(e.sample(a), e.sample(b), d);
      ++n_cross;
    }
  }
  check(n_same > 0 && n_cross > 0, "dataset lacks same- or cross-identity pairs");
  return {same / n_same, cross / n_cross};
}

}  // namespace slgan::eval
