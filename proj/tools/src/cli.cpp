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

#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "service.hpp"
#include "slgan/blendshape.hpp"
#include "slgan/evaluator.hpp"
#include "slgan/image.hpp"
#include "slgan/inference.hpp"
#include "slgan/synth.hpp"
#include "slgan/trainer.hpp"

namespace slgan::tools {

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  check<IoError>(static_cast<bool>(in), "cannot open '{}'", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  check<IoError>(static_cast<bool>(out), "cannot write '{}'", path);
  out << text;
}

/// Comma- or whitespace-separated numbers.
std::vector<double> parse_numbers(const std::string& text) {
  std::string cleaned = text;
  for (char& c : cleaned)
    if (c == ',' || c == '[' || c == ']') c = ' ';
  std::istringstream in(cleaned);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    check(used == token.size(), "'{}' is not a number", token);
    out.push_back(v);
  }
  return out;
}

/// "all-zero", a comma-separated list, or @file holding such a list.
Eigen::VectorXd parse_param_vector(const std::string& spec, int n) {
  if (spec == "all-zero" || spec == "zero" || spec == "zeros") return Eigen::VectorXd::Zero(n);
  const auto values = parse_numbers(spec.size() > 1 && spec[0] == '@' ? read_text(spec.substr(1)) : spec);
  check(static_cast<int>(values.size()) == n, "model expects {} parameters, got {}", n, values.size());
  return Eigen::Map<const Eigen::VectorXd>(values.data(), n);
}

int param_index(const InferenceModel& model, const std::string& key) {
  const auto& labels = model.basis().labels;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == key) return static_cast<int>(k);
  std::size_t used = 0;
  int k = -1;
  try {
    k = std::stoi(key, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  check(used == key.size() && k >= 0 && k < model.num_params(), "unknown parameter '{}' (index 0..{} or a label)",
        key, model.num_params() - 1);
  return k;
}

std::vector<std::vector<double>> read_param_track(const std::string& path) {
  std::ifstream in(path);
  check<IoError>(static_cast<bool>(in), "cannot open parameter track '{}'", path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(parse_numbers(line));
  }
  return rows;
}

std::string frame_name(const std::string& stem, int i) { return fmt::format("{}_{:04d}.png", stem, i); }

struct ModelArgs {
  std::string checkpoint;
  std::string basis;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->envname("SLGAN_CHECKPOINT");
    app->add_option("--basis", basis, "Blendshape basis the model was trained with")
        ->required()
        ->envname("SLGAN_BASIS");
  }
  std::shared_ptr<const InferenceModel> load() const { return InferenceModel::load(checkpoint, basis); }
};

HttpServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"slgan: slider-driven facial expression editing on synthetic faces", "slgan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "slgan 0.1.0");
  app.footer("Paths and ports can also be set with SLGAN_* environment variables (see each option).");

  // gen-data
  synth::DatasetConfig data_cfg;
  std::string data_out, sampling = "uniform";
  bool no_neutral = false;
  auto* gen = app.add_subcommand("gen-data", "Render a labelled synthetic face dataset");
  gen->add_option("--out", data_out, "Output directory")->required()->envname("SLGAN_DATA_DIR");
  gen->add_option("--identities", data_cfg.n_identities, "Number of identities")->capture_default_str();
  gen->add_option("--per-identity", data_cfg.per_identity, "Samples per identity")->capture_default_str();
  gen->add_option("--size", data_cfg.height, "Image height and width")->capture_default_str();
  gen->add_option("--params", data_cfg.num_params, "Number of blendshape parameters N")->capture_default_str();
  gen->add_option("--seed", data_cfg.seed, "Generator seed")->capture_default_str();
  gen->add_option("--paired-fraction", data_cfg.paired_fraction, "Fraction of records with a paired target")
      ->capture_default_str();
  gen->add_option("--sampling", sampling, "Parameter sampling")
      ->check(CLI::IsMember({"uniform", "gaussian"}))
      ->capture_default_str();
  gen->add_flag("--no-neutral", no_neutral, "Do not force a neutral first record per identity");

  // build-basis
  std::string basis_dataset, basis_out, variant = "abs_max_one";
  int components = 0;
  double sparsity = 0.0;
  int max_iters = 500;
  bool synthetic_modes = false;
  auto* bb = app.add_subcommand("build-basis", "Build a sparse localized blendshape basis from a dataset");
  bb->add_option("--dataset", basis_dataset, "Dataset manifest")->required()->envname("SLGAN_DATASET");
  bb->add_option("--out", basis_out, "Output basis file")->required();
  bb->add_option("--components", components, "Number of components h (default: dataset N)");
  bb->add_option("--sparsity", sparsity, "Group-lasso weight on coefficient rows")->capture_default_str();
  bb->add_option("--variant", variant, "Component constraint")
      ->check(CLI::IsMember({"abs_max_one", "nonneg_max_one"}))
      ->capture_default_str();
  bb->add_option("--max-iters", max_iters, "Solver iteration cap")->capture_default_str();
  bb->add_flag("--synthetic-modes", synthetic_modes,
               "Write the generator's ground-truth modes instead of solving (labels match the manifest)");

  // train
  std::string config_path, train_out;
  bool resume = false;
  auto* tr = app.add_subcommand("train", "Two-phase adversarial training");
  tr->add_option("--config", config_path, "Training config file")->required()->envname("SLGAN_CONFIG");
  tr->add_option("--out", train_out, "Run directory (checkpoint.slgan, metrics.jsonl)")
      ->required()
      ->envname("SLGAN_RUN_DIR");
  tr->add_flag("--resume", resume, "Continue from the run directory's checkpoint");

  // pretrain-embedder
  std::string emb_dataset, emb_out;
  train::EmbedderTrainConfig emb_cfg;
  auto* pe = app.add_subcommand("pretrain-embedder", "Fit the identity embedder used by the identity loss");
  pe->add_option("--dataset", emb_dataset, "Dataset manifest")->required()->envname("SLGAN_DATASET");
  pe->add_option("--out", emb_out, "Output embedder file")->required();
  pe->add_option("--epochs", emb_cfg.epochs, "Epochs")->capture_default_str();
  pe->add_option("--batch-size", emb_cfg.batch_size, "Batch size")->capture_default_str();
  pe->add_option("--seed", emb_cfg.seed, "Seed")->capture_default_str();

  // edit
  ModelArgs edit_model;
  std::string edit_in, edit_out, params_spec, sweep_key, out_dir;
  std::vector<std::string> param_sets;
  int sweep_steps = 11;
  bool print_params = false;
  auto* ed = app.add_subcommand("edit", "Generate an image with chosen slider values");
  edit_model.add(ed);
  ed->add_option("--input", edit_in, "Input PNG")->required();
  ed->add_option("--output", edit_out, "Output PNG (single edit)");
  ed->add_option("--params", params_spec, "Full vector: all-zero, comma list, or @file (default: regressed from input)");
  ed->add_option("--param", param_sets, "Set one slider, k=v with k an index or label (repeatable)");
  ed->add_option("--sweep", sweep_key, "Sweep one parameter from -1 to 1 (others from --params, else zero)");
  ed->add_option("--steps", sweep_steps, "Sweep levels")->capture_default_str();
  ed->add_option("--out-dir", out_dir, "Directory for sweep frames and strip");
  ed->add_flag("--print-params", print_params, "Print the regression of the output as JSON");

  // transfer
  ModelArgs tr_model;
  std::string tr_src, tr_trg, tr_out, tr_strip, tr_track, tr_dir;
  auto* tf = app.add_subcommand("transfer", "Transfer an expression between images or apply a parameter track");
  tr_model.add(tf);
  tf->add_option("--source", tr_src, "Source PNG (identity)")->required();
  tf->add_option("--target", tr_trg, "Target PNG (expression)");
  tf->add_option("--output", tr_out, "Output PNG");
  tf->add_option("--strip", tr_strip, "Also write a source / 5-step interpolation / target strip");
  tf->add_option("--param-track", tr_track, "File with one parameter vector per line; one frame each");
  tf->add_option("--out-dir", tr_dir, "Frame directory for --param-track");

  // eval
  ModelArgs ev_model;
  std::string ev_dataset, ev_mode = "vs_truth", ev_out, ev_images;
  int ev_samples = 200;
  std::uint64_t ev_seed = 1;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev_model.add(ev);
  ev->add_option("--dataset", ev_dataset, "Evaluation manifest")->required()->envname("SLGAN_DATASET");
  ev->add_option("--mode", ev_mode, "Evaluation")
      ->check(CLI::IsMember({"vs_truth", "consistency", "transfer", "neutralize"}))
      ->capture_default_str();
  ev->add_option("--samples", ev_samples, "Records or pairs to evaluate")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Seed for targets and pairs")->capture_default_str();
  ev->add_option("--output", ev_out, "Write the report here instead of stdout");
  ev->add_option("--images", ev_images, "Write strips or neutralized images to this directory");

  // ablate
  std::string ab_config, ab_out, ab_heldout, ab_judge;
  std::vector<std::string> ab_variants{"full", "no_id", "no_gen", "no_id_gen"};
  int ab_pairs = 100;
  auto* ab = app.add_subcommand("ablate", "Train loss-ablation variants and compare them");
  ab->add_option("--config", ab_config, "Base training config")->required()->envname("SLGAN_CONFIG");
  ab->add_option("--out", ab_out, "Output directory, one run per variant")->required();
  ab->add_option("--variants", ab_variants, "Variants")->delimiter(',')->capture_default_str();
  ab->add_option("--heldout", ab_heldout, "Held-out manifest")->required();
  ab->add_option("--judge", ab_judge, "Embedder file used to score identity preservation")->required();
  ab->add_option("--pairs", ab_pairs, "Transfer pairs")->capture_default_str();

  // serve
  ModelArgs sv_model;
  std::string host = "127.0.0.1", sv_dataset;
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "HTTP inference service and slider UI");
  sv_model.add(sv);
  sv->add_option("--host", host, "Bind address")->envname("SLGAN_HOST")->capture_default_str();
  sv->add_option("--port", port, "Port (0 picks a free one)")->envname("SLGAN_PORT")->capture_default_str();
  sv->add_option("--dataset", sv_dataset, "Optional manifest for dataset_id requests")->envname("SLGAN_DATASET");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (*gen) {
      data_cfg.width = data_cfg.height;
      data_cfg.sampling = sampling == "gaussian" ? synth::ParamSampling::kTruncatedGaussian : synth::ParamSampling::kUniform;
      data_cfg.include_neutral = !no_neutral;
      const auto manifest = synth::generate_dataset(data_cfg, data_out);
      out << fmt::format("wrote {} records to {}\nmanifest hash {}\n", manifest.records.size(),
                         (fs::path(data_out) / "manifest.jsonl").string(), manifest.hash());
    } else if (*bb) {
      const auto manifest = synth::Manifest::load(basis_dataset);
      BlendshapeBasis basis;
      if (synthetic_modes) {
        basis = synth::synthetic_mode_basis(manifest.config.num_params);
      } else {
        const auto diff = synth::build_landmark_difference_matrix(manifest);
        for (const auto& w : diff.warnings) err << "warning: " << w << "\n";
        SparseBasisOptions opts;
        opts.num_components = components > 0 ? components : manifest.config.num_params;
        opts.sparsity_weight = sparsity;
        opts.constraint = constraint_from_string(variant);
        opts.max_iters = max_iters;
        auto result = build_sparse_basis(diff.matrix, opts);
        basis = std::move(result.basis);
        // Neutral shape: mean of the identities' neutral landmarks.
        MeshVector mean = MeshVector::Zero(basis.components.rows());
        int count = 0;
        for (const auto& r : manifest.records) {
          if (!r.neutral) continue;
          mean += synth::neutral_landmarks(synth::IdentitySpec::from_seed(r.identity_seed));
          ++count;
        }
        if (count > 0) basis.mean = mean / count;
        err << fmt::format("solver: {} iterations, objective {:.6g}{}\n", result.iterations,
                           result.objective_trace.empty() ? 0.0 : result.objective_trace.back(),
                           result.converged ? "" : " (not converged)");
      }
      basis.dataset_hash = manifest.hash();
      save_basis(basis, basis_out);
      out << fmt::format("wrote basis with h = {} to {}\nbasis hash {}\n", basis.num_components(), basis_out,
                         basis_hash(basis));
    } else if (*tr) {
      const auto config = train::TrainConfig::load(config_path);
      train::Trainer trainer = train::Trainer::from_config(config);
      err << fmt::format("training {} steps (config {})\n", trainer.total_steps(), config.hash().substr(0, 12));
      const auto result = train::train(trainer, train_out, resume,
                                       [&](train::Trainer& t, const std::vector<losses::LossReport>& reports) {
                                         if (t.step() % 20 == 0 || t.step() == t.total_steps()) {
                                           err << fmt::format("step {}/{}  D {:.4f}  G {:.4f}\n", t.step(),
                                                              t.total_steps(), reports.front().total,
                                                              reports.back().total);
                                         }
                                       });
      out << fmt::format("checkpoint {}\nmetrics {}\n", result.checkpoint_path, result.metrics_path);
    } else if (*pe) {
      const auto data = synth::load_dataset(emb_dataset);
      const auto embedder = train::pretrain_embedder(data, emb_cfg, [&](int epoch, double loss) {
        err << fmt::format("epoch {} loss {:.5f}\n", epoch, loss);
      });
      save_embedder_file(*embedder, emb_out);
      const auto [same, cross] = eval::embedding_separation(*embedder, data, 500, emb_cfg.seed);
      out << fmt::format("wrote {}\nsame-identity cosine {:.4f}, cross-identity cosine {:.4f}\n", emb_out, same, cross);
    } else if (*ed) {
      const auto model = edit_model.load();
      const ImageTensor input = read_png(edit_in);
      if (!sweep_key.empty()) {
        check(!out_dir.empty(), "--sweep needs --out-dir");
        check(sweep_steps >= 2, "--steps must be at least 2");
        const int k = param_index(*model, sweep_key);
        Eigen::VectorXd base =
            params_spec.empty() ? Eigen::VectorXd::Zero(model->num_params()) : parse_param_vector(params_spec, model->num_params());
        fs::create_directories(out_dir);
        std::vector<ImageTensor> frames;
        for (int i = 0; i < sweep_steps; ++i) {
          Eigen::VectorXd p = base;
          p(k) = -1.0 + 2.0 * i / (sweep_steps - 1);
          const auto r = model->edit(input, ParameterVector(p));
          write_png(r.image, (fs::path(out_dir) / frame_name("sweep", i)).string());
          frames.push_back(r.image);
          out << fmt::format("{} {:.2f}\n", frame_name("sweep", i), p(k));
        }
        write_png(contact_sheet(frames, sweep_steps), (fs::path(out_dir) / "sweep_strip.png").string());
      } else {
        check(!edit_out.empty(), "edit needs --output (or --sweep with --out-dir)");
        Eigen::VectorXd p = params_spec.empty() ? Eigen::VectorXd(model->regress(input).row(0).transpose())
                                                : parse_param_vector(params_spec, model->num_params());
        for (const auto& kv : param_sets) {
          const auto eq = kv.find('=');
          check(eq != std::string::npos, "--param expects k=v, got '{}'", kv);
          const auto v = parse_numbers(kv.substr(eq + 1));
          check(v.size() == 1, "--param value '{}' is not a number", kv.substr(eq + 1));
          p(param_index(*model, kv.substr(0, eq))) = v[0];
        }
        check(p.cwiseAbs().maxCoeff() <= 1.0, "parameters must lie in [-1, 1]");
        const auto r = model->edit(input, ParameterVector(p));
        write_png(r.image, edit_out);
        if (print_params) {
          nlohmann::json j = std::vector<double>(r.p_est.data(), r.p_est.data() + r.p_est.size());
          out << j.dump() << "\n";
        }
      }
    } else if (*tf) {
      const auto model = tr_model.load();
      const ImageTensor source = read_png(tr_src);
      if (!tr_track.empty()) {
        check(!tr_dir.empty(), "--param-track needs --out-dir");
        fs::create_directories(tr_dir);
        const auto track = read_param_track(tr_track);
        for (std::size_t i = 0; i < track.size(); ++i) {
          check(static_cast<int>(track[i].size()) == model->num_params(), "track line {} has {} values, model N = {}",
                i + 1, track[i].size(), model->num_params());
          const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(track[i].data(), model->num_params());
          write_png(model->edit(source, ParameterVector(p)).image,
                    (fs::path(tr_dir) / frame_name("frame", static_cast<int>(i))).string());
        }
        out << fmt::format("wrote {} frames to {}\n", track.size(), tr_dir);
      } else {
        check(!tr_trg.empty() && !tr_out.empty(), "transfer needs --target and --output (or --param-track)");
        const ImageTensor target = read_png(tr_trg);
        const auto r = model->interpolate(source, target, 0.0);
        write_png(r.image, tr_out);
        if (!tr_strip.empty()) {
          std::vector<ImageTensor> row{model->prepare(source)};
          for (int s = 0; s < eval::kStripSteps; ++s)
            row.push_back(model->interpolate(source, target, static_cast<double>(s) / (eval::kStripSteps - 1)).image);
          row.push_back(model->prepare(target));
          write_png(contact_sheet(row, static_cast<int>(row.size())), tr_strip);
        }
      }
    } else if (*ev) {
      const auto model = ev_model.load();
      const auto data = synth::load_dataset(ev_dataset);
      const int n = std::min(ev_samples, data.size());
      eval::EvalReport report;
      if (ev_mode == "vs_truth" || ev_mode == "consistency") {
        report = eval::regression_error_report(*model, data.images.slice(0, n), data.params.topRows(n),
                                               eval::regression_mode_from_string(ev_mode), ev_seed);
      } else if (ev_mode == "transfer") {
        const auto pairs = eval::choose_pairs(data, ev_samples, ev_seed);
        auto t = eval::transfer_harness(*model, data, pairs, !ev_images.empty());
        report = t.report;
        if (!ev_images.empty()) {
          fs::create_directories(ev_images);
          for (std::size_t i = 0; i < t.strips.size(); ++i)
            write_png(t.strips[i], (fs::path(ev_images) / frame_name("strip", static_cast<int>(i))).string());
        }
      } else {
        auto nz = eval::neutralize(*model, data, eval::expressive_records(data, ev_samples));
        report = nz.report;
        if (!ev_images.empty()) {
          fs::create_directories(ev_images);
          for (std::size_t i = 0; i < nz.outputs.size(); ++i)
            write_png(nz.outputs[i], (fs::path(ev_images) / frame_name("neutral", static_cast<int>(i))).string());
        }
      }
      if (ev_out.empty()) out << report.to_json() << "\n";
      else write_text(ev_out, report.to_json() + "\n");
    } else if (*ab) {
      const auto base = train::TrainConfig::load(ab_config);
      const auto heldout = synth::load_dataset(ab_heldout);
      const auto judge = load_embedder_file(ab_judge);
      train::AblationEval setup;
      setup.heldout = &heldout;
      setup.judge = judge.get();
      setup.pairs = ab_pairs;
      setup.seed = base.seed;
      const auto report = train::ablation_run(base, train::ablation_variants(ab_variants), ab_out, setup,
                                              [&](const std::string& name, const train::Trainer& t) {
                                                if (t.step() % 50 == 0)
                                                  err << fmt::format("{}: step {}/{}\n", name, t.step(),
                                                                     t.total_steps());
                                              });
      write_text((fs::path(ab_out) / "ablation.json").string(), report.to_json() + "\n");
      out << report.to_json() << "\n";
    } else if (*sv) {
      std::optional<synth::Dataset> dataset;
      if (!sv_dataset.empty()) dataset = synth::load_dataset(sv_dataset);
      Service service(sv_model.load(), std::move(dataset));
      service.set_source(sv_model.checkpoint, sv_model.basis);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      out << fmt::format("serving on http://{}:{}/ui\n", host, bound) << std::flush;
      server.listen();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace slgan::tools
