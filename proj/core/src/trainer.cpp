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

#include "slgan/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "slgan/evaluator.hpp"
#include "slgan/hash.hpp"
#include "slgan/rng.hpp"

namespace slgan::train {

namespace fs = std::filesystem;
using losses::LossReport;
using losses::Phase;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEmbedderStream = 0x1e3b;
constexpr std::uint64_t kShuffleStream = 0x5f1e;
constexpr std::uint64_t kTargetStream = 0x7a26;
constexpr std::uint64_t kPenaltyStream = 0x69e0;

// --- config text ------------------------------------------------------------

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string unquote(const std::string& raw, int line_no) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') return raw;
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\') {
      check(i + 2 < raw.size(), "line {}: dangling escape", line_no);
      const char c = raw[++i];
      out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
    } else {
      out += raw[i];
    }
  }
  return out;
}

std::vector<std::string> parse_list(const std::string& raw, int line_no) {
  check(raw.size() >= 2 && raw.front() == '[' && raw.back() == ']', "line {}: expected a [list], got '{}'", line_no,
        raw);
  std::vector<std::string> items;
  const std::string body = trim(raw.substr(1, raw.size() - 2));
  if (body.empty()) return items;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
    if (c == ',' && !quoted) {
      items.push_back(unquote(trim(current), line_no));
      current.clear();
    } else {
      current += c;
    }
  }
  items.push_back(unquote(trim(current), line_no));
  return items;
}

double to_number(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  check(used == value.size() && !value.empty(), "config key '{}': '{}' is not a number", key, value);
  return v;
}

int to_count(const std::string& key, const std::string& value) {
  const double v = to_number(key, value);
  check(v == std::floor(v) && std::abs(v) < 2e9, "config key '{}': '{}' is not an integer", key, value);
  return static_cast<int>(v);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// --- batches ----------------------------------------------------------------

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.index(static_cast<std::uint64_t>(i) + 1)]);
  return p;
}

void check_report(const LossReport& r) {
  if (!r.all_finite()) {
    throw TrainingAborted(fmt::format("non-finite {} loss at step {}: {}", r.network, r.step, r.to_json()));
  }
}

}  // namespace

// --- TrainConfig --------------------------------------------------------------

void TrainConfig::validate() const {
  weights.validate();
  check(batch_size >= 2, "batch_size must be at least 2 (batch means), got {}", batch_size);
  check(epochs_paired >= 0 && epochs_unpaired >= 0, "epochs must be >= 0");
  check(optimizer.name == "adam", "unsupported optimizer '{}' (only adam)", optimizer.name);
  check(optimizer.step_size > 0.0 && std::isfinite(optimizer.step_size), "optimizer.step_size must be positive");
  check(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 > 0.0 && optimizer.beta2 < 1.0,
        "optimizer betas must lie in (0, 1)");
  for (const auto& a : ablation) check(a == "id" || a == "gen", "unknown ablation term '{}' (expected id or gen)", a);
  check(n_critic >= 1, "n_critic must be >= 1, got {}", n_critic);
  check(eval_samples >= 0 && checkpoint_every >= 0, "eval_samples and checkpoint_every must be >= 0");
  check(image_size == 0 || (image_size >= 16 && image_size % 16 == 0), "image_size must be 0 or a multiple of 16");
  nn::NetworkPreset::from_name(preset);
}

nn::NetworkPreset TrainConfig::network_preset() const {
  nn::NetworkPreset p = nn::NetworkPreset::from_name(preset);
  if (image_size > 0) p.image_size = image_size;
  return p;
}

std::string TrainConfig::to_text() const {
  std::string ablations;
  for (const auto& a : ablation) ablations += (ablations.empty() ? "" : ", ") + quote(a);
  std::string out;
  out += fmt::format("batch_size = {}\n", batch_size);
  out += fmt::format("epochs_paired = {}\n", epochs_paired);
  out += fmt::format("epochs_unpaired = {}\n", epochs_unpaired);
  out += fmt::format("seed = {}\n", seed);
  out += fmt::format("adversarial_mode = {}\n", quote(losses::to_string(adversarial_mode)));
  out += fmt::format("ablation = [{}]\n", ablations);
  out += fmt::format("n_critic = {}\n", n_critic);
  out += fmt::format("preset = {}\n", quote(preset));
  out += fmt::format("image_size = {}\n", image_size);
  out += fmt::format("dataset = {}\n", quote(dataset));
  out += fmt::format("basis = {}\n", quote(basis));
  out += fmt::format("embedder = {}\n", quote(embedder));
  out += fmt::format("eval_dataset = {}\n", quote(eval_dataset));
  out += fmt::format("eval_samples = {}\n", eval_samples);
  out += fmt::format("checkpoint_every = {}\n", checkpoint_every);
  out += "\n[weights]\n";
  out += fmt::format("lambda_adv = {}\nlambda_exp = {}\nlambda_rec = {}\nlambda_gen = {}\n", weights.adv, weights.exp,
                     weights.rec, weights.gen);
  out += fmt::format("lambda_id = {}\nlambda_att = {}\nlambda_gp = {}\n", weights.id, weights.att, weights.gp);
  out += "\n[optimizer]\n";
  out += fmt::format("name = {}\nstep_size = {}\nbeta1 = {}\nbeta2 = {}\n", quote(optimizer.name),
                     optimizer.step_size, optimizer.beta1, optimizer.beta2);
  return out;
}

std::string TrainConfig::hash() const { return sha256_hex(to_text()); }

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      check(line.back() == ']', "line {}: malformed section header '{}'", line_no, line);
      section = trim(line.substr(1, line.size() - 2));
      check(section == "weights" || section == "optimizer", "line {}: unknown section '{}'", line_no, section);
      continue;
    }
    const auto eq = line.find('=');
    check(eq != std::string::npos, "line {}: expected 'key = value', got '{}'", line_no, line);
    std::string key = trim(line.substr(0, eq));
    const std::string value_raw = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    check(seen.insert(key).second, "line {}: duplicate key '{}'", line_no, key);
    const std::string v = unquote(value_raw, line_no);

    if (key == "batch_size") c.batch_size = to_count(key, v);
    else if (key == "epochs_paired") c.epochs_paired = to_count(key, v);
    else if (key == "epochs_unpaired") c.epochs_unpaired = to_count(key, v);
    else if (key == "seed") {
      check(!v.empty() && std::all_of(v.begin(), v.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }),
            "config key 'seed': '{}' is not a nonnegative integer", v);
      c.seed = std::stoull(v);
    }
    else if (key == "adversarial_mode") c.adversarial_mode = losses::adversarial_mode_from_string(v);
    else if (key == "ablation") {
      const auto items = parse_list(value_raw, line_no);
      c.ablation = std::set<std::string>(items.begin(), items.end());
    }
    else if (key == "n_critic") c.n_critic = to_count(key, v);
    else if (key == "preset") c.preset = v;
    else if (key == "image_size") c.image_size = to_count(key, v);
    else if (key == "dataset") c.dataset = v;
    else if (key == "basis") c.basis = v;
    else if (key == "embedder") c.embedder = v;
    else if (key == "eval_dataset") c.eval_dataset = v;
    else if (key == "eval_samples") c.eval_samples = to_count(key, v);
    else if (key == "checkpoint_every") c.checkpoint_every = to_count(key, v);
    else if (key == "weights.lambda_adv") c.weights.adv = to_number(key, v);
    else if (key == "weights.lambda_exp") c.weights.exp = to_number(key, v);
    else if (key == "weights.lambda_rec") c.weights.rec = to_number(key, v);
    else if (key == "weights.lambda_gen") c.weights.gen = to_number(key, v);
    else if (key == "weights.lambda_id") c.weights.id = to_number(key, v);
    else if (key == "weights.lambda_att") c.weights.att = to_number(key, v);
    else if (key == "weights.lambda_gp") c.weights.gp = to_number(key, v);
    else if (key == "optimizer.name") c.optimizer.name = v;
    else if (key == "optimizer.step_size") c.optimizer.step_size = to_number(key, v);
    else if (key == "optimizer.beta1") c.optimizer.beta1 = to_number(key, v);
    else if (key == "optimizer.beta2") c.optimizer.beta2 = to_number(key, v);
    else throw DomainError(fmt::format("line {}: unknown config key '{}'", line_no, key));
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  check<IoError>(static_cast<bool>(in), "cannot open config '{}'", path);
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c = parse(ss.str());
  // Relative paths in a config file resolve against the file's directory.
  const fs::path base = fs::path(path).parent_path();
  for (std::string* p : {&c.dataset, &c.basis, &c.eval_dataset}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).string();
  }
  if (c.embedder != "projection" && fs::path(c.embedder).is_relative()) c.embedder = (base / c.embedder).string();
  return c;
}

// --- Trainer ----------------------------------------------------------------

Trainer::Trainer(TrainConfig config, synth::Dataset data, BlendshapeBasis basis,
                 std::unique_ptr<nn::Embedder<float>> embedder, std::optional<synth::Dataset> eval)
    : config_(std::move(config)), data_(std::move(data)), basis_(std::move(basis)), eval_(std::move(eval)) {
  config_.validate();
  basis_.validate();
  const nn::NetworkPreset preset = config_.network_preset();
  const std::string manifest_hash = data_.manifest.hash();
  check(basis_.dataset_hash == manifest_hash, "basis was built from dataset {} but the training dataset is {}",
        basis_.dataset_hash.empty() ? "<none>" : basis_.dataset_hash, manifest_hash);
  check<ShapeError>(basis_.num_components() == data_.num_params(), "basis has {} components but the dataset has N = {}",
                    basis_.num_components(), data_.num_params());
  check<ShapeError>(data_.images.h() == preset.image_size && data_.images.w() == preset.image_size,
                    "dataset images are {}x{} but the network expects {}x{}", data_.images.h(), data_.images.w(),
                    preset.image_size, preset.image_size);
  if (eval_) {
    check<ShapeError>(eval_->num_params() == data_.num_params() && eval_->images.h() == preset.image_size,
                      "evaluation dataset does not match the training data");
  }
  if (config_.epochs_paired > 0) {
    check(static_cast<int>(data_.paired.size()) >= config_.batch_size,
          "paired phase needs at least {} paired records, dataset has {}", config_.batch_size, data_.paired.size());
  }
  check(data_.size() >= config_.batch_size, "dataset has {} records, fewer than one batch", data_.size());

  ModelMeta meta;
  meta.preset = preset;
  meta.num_params = data_.num_params();
  meta.basis_hash = basis_hash(basis_);
  meta.basis_kind = basis_.basis_kind;
  meta.config_hash = config_.hash();
  meta.adversarial_mode = losses::to_string(config_.adversarial_mode);
  const nn::AdamOptions adam{config_.optimizer.step_size, config_.optimizer.beta1, config_.optimizer.beta2, 1e-8};
  bundle_ = CheckpointBundle::initialize(meta, derive_seed(config_.seed, kInitStream), adam);
  if (!embedder) {
    embedder = std::make_unique<nn::Embedder<float>>(nn::EmbedderKind::kProjection, preset.image_size,
                                                     derive_seed(config_.seed, kEmbedderStream));
  }
  check<ShapeError>(embedder->image_size() == preset.image_size, "embedder expects {}x{} images, network uses {}",
                    embedder->image_size(), embedder->image_size(), preset.image_size);
  bundle_.embedder = std::move(embedder);

  options_.weights = config_.weights;
  options_.mode = config_.adversarial_mode;
  options_.use_id = config_.ablation.count("id") == 0;
  options_.use_gen = config_.ablation.count("gen") == 0;
}

Trainer Trainer::from_config(const TrainConfig& config) {
  config.validate();
  check(!config.dataset.empty() && !config.basis.empty(), "config must name a dataset and a basis");
  synth::Dataset data = synth::load_dataset(config.dataset);
  BlendshapeBasis basis = load_basis(config.basis);
  std::unique_ptr<nn::Embedder<float>> embedder;
  if (config.embedder != "projection") embedder = load_embedder_file(config.embedder);
  std::optional<synth::Dataset> eval;
  if (!config.eval_dataset.empty()) eval = synth::load_dataset(config.eval_dataset);
  return Trainer(config, std::move(data), std::move(basis), std::move(embedder), std::move(eval));
}

int Trainer::batches_per_epoch(Phase phase) const {
  const int n = phase == Phase::kPaired ? static_cast<int>(data_.paired.size()) : data_.size();
  return n / config_.batch_size;
}

std::int64_t Trainer::total_steps() const {
  return static_cast<std::int64_t>(config_.epochs_paired) * batches_per_epoch(Phase::kPaired) +
         static_cast<std::int64_t>(config_.epochs_unpaired) * batches_per_epoch(Phase::kUnpaired);
}

StepPosition Trainer::position(std::int64_t step) const {
  check(step >= 0 && step < total_steps(), "step {} outside the schedule of {} steps", step, total_steps());
  StepPosition pos;
  const std::int64_t bp = batches_per_epoch(Phase::kPaired);
  const std::int64_t paired_steps = config_.epochs_paired * bp;
  std::int64_t local = step;
  std::int64_t per_epoch = bp;
  int epoch_offset = 0;
  if (step >= paired_steps) {
    pos.phase = Phase::kUnpaired;
    local = step - paired_steps;
    per_epoch = batches_per_epoch(Phase::kUnpaired);
    epoch_offset = config_.epochs_paired;
  }
  pos.epoch = epoch_offset + static_cast<int>(local / per_epoch);
  pos.batch = static_cast<int>(local % per_epoch);
  pos.last_in_epoch = pos.batch == per_epoch - 1;
  return pos;
}

Batch<float> Trainer::make_batch(std::int64_t step, int critic_iteration, const StepPosition& pos) const {
  const int B = config_.batch_size;
  const int N = data_.num_params();
  const bool paired = pos.phase == Phase::kPaired;
  const int pool = paired ? static_cast<int>(data_.paired.size()) : data_.size();
  const std::vector<int> perm = permutation(pool, derive_seed(config_.seed, kShuffleStream, pos.epoch));
  Batch<float> b;
  b.images = ImageTensor(B, 3, data_.images.h(), data_.images.w());
  b.params.resize(B, N);
  b.targets.resize(B, N);
  if (paired) b.target_images = ImageTensor(b.images.shape());
  Rng rng(derive_seed(config_.seed, kTargetStream, static_cast<std::uint64_t>(step) * (config_.n_critic + 1) + critic_iteration));
  const std::size_t m = b.images.shape().sample_size();
  for (int i = 0; i < B; ++i) {
    const int slot = perm[pos.batch * B + i];
    const int record = paired ? data_.paired[slot] : slot;
    std::copy_n(data_.images.sample(record), m, b.images.sample(i));
    b.params.row(i) = data_.params.row(record).cast<float>();
    if (paired) {
      std::copy_n(data_.target_images.sample(slot), m, b.target_images->sample(i));
      b.targets.row(i) = data_.target_params.row(slot).cast<float>();
    } else {
      for (int k = 0; k < N; ++k) b.targets(i, k) = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
  }
  return b;
}

std::vector<LossReport> Trainer::run_step() {
  const std::int64_t s = step();
  const StepPosition pos = position(s);
  StepOptions opt = options_;
  opt.phase = pos.phase;
  auto& g = *bundle_.generator;
  auto& d = *bundle_.discriminator;
  std::vector<LossReport> reports;

  for (int j = 0; j < config_.n_critic; ++j) {
    const Batch<float> batch = make_batch(s, j, pos);
    std::vector<float> grads = d.weights().zeros();
    LossReport r = discriminator_objective(
        g, d, batch, opt, derive_seed(config_.seed, kPenaltyStream, static_cast<std::uint64_t>(s) * config_.n_critic + j),
        grads.data());
    r.step = s;
    check_report(r);
    bundle_.adam_d.step(d.weights().values(), grads);
    if (!d.weights().all_finite()) throw TrainingAborted(fmt::format("discriminator weights non-finite at step {}", s));
    reports.push_back(std::move(r));
  }

  const Batch<float> batch = make_batch(s, config_.n_critic, pos);
  std::vector<float> grads = g.weights().zeros();
  LossReport r = generator_objective(g, d, opt.use_id ? bundle_.embedder.get() : nullptr, batch, opt, grads.data());
  r.step = s;
  check_report(r);
  bundle_.adam_g.step(g.weights().values(), grads);
  if (!g.weights().all_finite()) throw TrainingAborted(fmt::format("generator weights non-finite at step {}", s));
  reports.push_back(std::move(r));
  ++bundle_.meta.step;
  return reports;
}

double Trainer::heldout_regression_error() const {
  if (!eval_) return std::nan("");
  const int n = std::min(config_.eval_samples, eval_->size());
  if (n == 0) return std::nan("");
  const ImageTensor images = eval_->images.slice(0, n);
  Eigen::MatrixXd est(n, eval_->num_params());
  for (int first = 0; first < n; first += 32) {
    const int count = std::min(32, n - first);
    est.middleRows(first, count) = bundle_.discriminator->forward(images.slice(first, count)).p_est.cast<double>();
  }
  return eval::relative_error(eval_->params.topRows(n), est).mean_relative_error;
}

void Trainer::restore(CheckpointBundle bundle) {
  check(bundle.meta.config_hash == bundle_.meta.config_hash, "checkpoint config {} does not match this config {}",
        bundle.meta.config_hash, bundle_.meta.config_hash);
  check(bundle.meta.basis_hash == bundle_.meta.basis_hash, "checkpoint basis does not match");
  check(bundle.meta.step >= 0 && bundle.meta.step <= total_steps(), "checkpoint step {} outside the schedule",
        bundle.meta.step);
  if (!bundle.embedder) bundle.embedder = std::move(bundle_.embedder);
  bundle_ = std::move(bundle);
}

std::string Trainer::metrics_header() const {
  nlohmann::ordered_json j;
  j["kind"] = "header";
  j["config_hash"] = bundle_.meta.config_hash;
  j["basis_hash"] = bundle_.meta.basis_hash;
  j["dataset_hash"] = data_.manifest.hash();
  j["preset"] = bundle_.meta.preset.name;
  j["image_size"] = bundle_.meta.preset.image_size;
  j["num_params"] = bundle_.meta.num_params;
  j["adversarial_mode"] = bundle_.meta.adversarial_mode;
  j["n_critic"] = config_.n_critic;
  j["total_steps"] = total_steps();
  return j.dump();
}

// --- full runs ----------------------------------------------------------------

namespace {

std::string epoch_line(const Trainer& t, const StepPosition& pos) {
  nlohmann::ordered_json j;
  j["kind"] = "epoch";
  j["epoch"] = pos.epoch;
  j["phase"] = losses::to_string(pos.phase);
  j["step"] = t.step();
  const double err = t.heldout_regression_error();
  if (std::isfinite(err)) j["heldout_regression_error"] = err;
  return j.dump();
}

/// Drops log lines written after the checkpoint being resumed.
void truncate_metrics(const std::string& path, std::int64_t completed) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) break;
    if (j.contains("kind") && j["kind"] == "header") {
      keep.push_back(line);
    } else if (j.contains("kind") && j["kind"] == "epoch") {
      if (j["step"].get<std::int64_t>() <= completed) keep.push_back(line);
    } else if (j.contains("step") && j["step"].get<std::int64_t>() < completed) {
      keep.push_back(line);
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

TrainResult train(Trainer& trainer, const std::string& out_dir, bool resume,
                  const std::function<void(Trainer&, const std::vector<LossReport>&)>& progress) {
  fs::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.slgan").string();
  result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();

  if (resume && fs::exists(result.checkpoint_path)) {
    trainer.restore(CheckpointBundle::load(result.checkpoint_path));
    truncate_metrics(result.metrics_path, trainer.step());
  } else {
    std::ofstream out(result.metrics_path, std::ios::trunc);
    check<IoError>(static_cast<bool>(out), "cannot write '{}'", result.metrics_path);
    out << trainer.metrics_header() << '\n';
  }
  std::ofstream log(result.metrics_path, std::ios::app);
  check<IoError>(static_cast<bool>(log), "cannot append to '{}'", result.metrics_path);

  if (trainer.step() == 0) trainer.bundle().save(result.checkpoint_path);
  const int every = trainer.config().checkpoint_every;
  while (trainer.step() < trainer.total_steps()) {
    const StepPosition pos = trainer.position(trainer.step());
    const auto reports = trainer.run_step();
    for (const auto& r : reports) log << r.to_json() << '\n';
    bool save = every > 0 && trainer.step() % every == 0;
    if (pos.last_in_epoch) {
      log << epoch_line(trainer, pos) << '\n';
      save = true;
    }
    log.flush();
    if (save || trainer.step() == trainer.total_steps()) trainer.bundle().save(result.checkpoint_path);
    if (progress) progress(trainer, reports);
  }
  result.bundle = CheckpointBundle::load(result.checkpoint_path);
  return result;
}

TrainResult train(const TrainConfig& config, const std::string& out_dir, bool resume) {
  Trainer trainer = Trainer::from_config(config);
  return train(trainer, out_dir, resume);
}

std::vector<AblationVariant> ablation_variants(const std::vector<std::string>& names) {
  std::vector<AblationVariant> out;
  for (const auto& n : names) {
    if (n == "full") out.push_back({n, {}});
    else if (n == "no_id") out.push_back({n, {"id"}});
    else if (n == "no_gen") out.push_back({n, {"gen"}});
    else if (n == "no_id_gen") out.push_back({n, {"id", "gen"}});
    else throw DomainError(fmt::format("unknown ablation variant '{}' (full, no_id, no_gen, no_id_gen)", n));
  }
  return out;
}

const AblationRow& AblationReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw DomainError(fmt::format("ablation report has no variant '{}'", name));
}

std::string AblationReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["variant"] = r.name;
    o["identity_cosine"] = r.identity_cosine;
    o["consistency_error"] = r.consistency_error;
    o["transfer_ied"] = r.transfer_ied;
    o["checkpoint"] = r.checkpoint_path;
    j.push_back(o);
  }
  return j.dump(2);
}

AblationReport ablation_run(const TrainConfig& base, const std::vector<AblationVariant>& variants,
                            const std::string& out_dir, const AblationEval& eval,
                            const std::function<void(const std::string&, const Trainer&)>& progress) {
  check(eval.heldout != nullptr && eval.judge != nullptr, "ablation_run needs a held-out set and a judge embedder");
  base.validate();
  const auto pairs = eval::choose_pairs(*eval.heldout, eval.pairs, eval.seed);
  const int n = std::min(eval.heldout->size(), std::max(eval.pairs, 1));
  AblationReport report;
  for (const auto& v : variants) {
    TrainConfig config = base;
    config.ablation = v.disabled;
    Trainer trainer = Trainer::from_config(config);
    TrainResult result = train(trainer, (fs::path(out_dir) / v.name).string(), false,
                               [&](Trainer& t, const std::vector<LossReport>&) {
                                 if (progress) progress(v.name, t);
                               });
    const InferenceModel model(std::move(result.bundle), load_basis(config.basis));
    AblationRow row;
    row.name = v.name;
    row.checkpoint_path = result.checkpoint_path;
    row.identity_cosine = eval::identity_cosine(model, *eval.judge, *eval.heldout, pairs);
    row.consistency_error =
        eval::regression_error_report(model, eval.heldout->images.slice(0, n), eval.heldout->params.topRows(n),
                                      eval::RegressionMode::kConsistency, eval.seed)
            .get("consistency_relative_error");
    row.transfer_ied = eval::transfer_harness(model, *eval.heldout, pairs).report.get("mean_transfer_ied");
    report.rows.push_back(std::move(row));
  }
  return report;
}

// --- embedder pretraining -----------------------------------------------------

std::unique_ptr<nn::Embedder<float>> pretrain_embedder(const synth::Dataset& data, const EmbedderTrainConfig& config,
                                                       const std::function<void(int, double)>& progress) {
  check(config.epochs >= 0 && config.batch_size >= 2, "invalid embedder training config");
  check<ShapeError>(data.images.h() == data.images.w(), "embedder training needs square images");
  auto embedder = std::make_unique<nn::Embedder<float>>(nn::EmbedderKind::kTrained, data.images.h(),
                                                        derive_seed(config.seed, kEmbedderStream, 1));
  int classes = 0;
  for (const auto& r : data.manifest.records) classes = std::max(classes, r.identity_index + 1);
  const int D = nn::Embedder<float>::kDim;
  Eigen::MatrixXf centers(classes, D);
  {
    Rng rng(derive_seed(config.seed, kEmbedderStream, 2));
    for (int c = 0; c < classes; ++c)
      for (int k = 0; k < D; ++k) centers(c, k) = static_cast<float>(rng.normal());
  }
  const nn::AdamOptions opts{config.step_size, 0.9, 0.999, 1e-8};
  nn::Adam<float> adam_net(embedder->weights().size(), opts);
  nn::Adam<float> adam_centers(static_cast<std::size_t>(centers.size()), opts);
  const int B = config.batch_size;
  const int steps_per_epoch = data.size() / B;
  const float s = static_cast<float>(config.scale);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = permutation(data.size(), derive_seed(config.seed, kShuffleStream, 1000 + epoch));
    double epoch_loss = 0.0;
    for (int b = 0; b < steps_per_epoch; ++b) {
      std::vector<int> idx(perm.begin() + b * B, perm.begin() + (b + 1) * B);
      std::vector<ImageTensor> parts;
      for (int i : idx) parts.push_back(data.images.slice(i));
      const ImageTensor x = nn::stack(parts);
      nn::Trace<float> trace;
      const auto e = embedder->forward(x, &trace);

      Eigen::MatrixXf E = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          e.data(), B, D);
      const Eigen::VectorXf e_norm = E.rowwise().norm().cwiseMax(1e-6f);
      const Eigen::VectorXf c_norm = centers.rowwise().norm().cwiseMax(1e-6f);
      const Eigen::MatrixXf En = e_norm.cwiseInverse().asDiagonal() * E;
      const Eigen::MatrixXf Cn = c_norm.cwiseInverse().asDiagonal() * centers;
      Eigen::MatrixXf logits = s * En * Cn.transpose();
      Eigen::MatrixXf dlogits(B, classes);
      double loss = 0.0;
      for (int i = 0; i < B; ++i) {
        const int label = data.manifest.records[idx[i]].identity_index;
        const float mx = logits.row(i).maxCoeff();
        Eigen::RowVectorXf p = (logits.row(i).array() - mx).exp();
        const float z = p.sum();
        p /= z;
        loss += -std::log(std::max(p(label), 1e-30f));
        dlogits.row(i) = p / static_cast<float>(B);
        dlogits(i, label) -= 1.0f / B;
      }
      epoch_loss += loss / B;
      // Through the cosine logits and both normalizations.
      const Eigen::MatrixXf dEn = s * dlogits * Cn;
      const Eigen::MatrixXf dCn = s * dlogits.transpose() * En;
      Eigen::MatrixXf dE(B, D), dC(classes, D);
      for (int i = 0; i < B; ++i)
        dE.row(i) = (dEn.row(i) - En.row(i) * En.row(i).dot(dEn.row(i))) / e_norm(i);
      for (int c = 0; c < classes; ++c)
        dC.row(c) = (dCn.row(c) - Cn.row(c) * Cn.row(c).dot(dCn.row(c))) / c_norm(c);

      nn::Tensor<float> de(e.shape());
      Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(de.data(), B, D) = dE;
      std::vector<float> grads = embedder->weights().zeros();
      embedder->backward(trace, de, grads.data(), nullptr);
      adam_net.step(embedder->weights().values(), grads);
      std::vector<float> cvals(centers.data(), centers.data() + centers.size());
      std::vector<float> cgrads(dC.data(), dC.data() + dC.size());
      adam_centers.step(cvals, cgrads);
      centers = Eigen::Map<const Eigen::MatrixXf>(cvals.data(), classes, D);
    }
    if (progress) progress(epoch, steps_per_epoch ? epoch_loss / steps_per_epoch : 0.0);
  }
  return embedder;
}

}  // namespace slgan::train
