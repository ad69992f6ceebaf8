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

#include "slgan/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "slgan/rng.hpp"

namespace slgan {

namespace {

int to_int(const std::map<std::string, std::string>& f, const std::string& key) {
  const auto it = f.find(key);
  check<IoError>(it != f.end(), "checkpoint metadata is missing '{}'", key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw IoError(fmt::format("checkpoint metadata field '{}' is not an integer: '{}'", key, it->second));
  }
}

std::string get(const std::map<std::string, std::string>& f, const std::string& key) {
  const auto it = f.find(key);
  check<IoError>(it != f.end(), "checkpoint metadata is missing '{}'", key);
  return it->second;
}

}  // namespace

std::map<std::string, std::string> ModelMeta::to_fields() const {
  return {{"preset", preset.name},
          {"gen_width", std::to_string(preset.gen_width)},
          {"gen_downsamples", std::to_string(preset.gen_downsamples)},
          {"gen_residual_blocks", std::to_string(preset.gen_residual_blocks)},
          {"disc_width", std::to_string(preset.disc_width)},
          {"disc_layers", std::to_string(preset.disc_layers)},
          {"image_size", std::to_string(preset.image_size)},
          {"num_params", std::to_string(num_params)},
          {"basis_hash", basis_hash},
          {"basis_kind", basis_kind},
          {"config_hash", config_hash},
          {"adversarial_mode", adversarial_mode},
          {"step", std::to_string(step)}};
}

ModelMeta ModelMeta::from_fields(const std::map<std::string, std::string>& f) {
  ModelMeta m;
  m.preset.name = get(f, "preset");
  m.preset.gen_width = to_int(f, "gen_width");
  m.preset.gen_downsamples = to_int(f, "gen_downsamples");
  m.preset.gen_residual_blocks = to_int(f, "gen_residual_blocks");
  m.preset.disc_width = to_int(f, "disc_width");
  m.preset.disc_layers = to_int(f, "disc_layers");
  m.preset.image_size = to_int(f, "image_size");
  m.num_params = to_int(f, "num_params");
  m.basis_hash = get(f, "basis_hash");
  m.basis_kind = get(f, "basis_kind");
  m.config_hash = get(f, "config_hash");
  m.adversarial_mode = get(f, "adversarial_mode");
  m.step = std::stoll(get(f, "step"));
  return m;
}

CheckpointBundle CheckpointBundle::initialize(const ModelMeta& meta, std::uint64_t seed, const nn::AdamOptions& adam) {
  CheckpointBundle b;
  b.meta = meta;
  b.generator = std::make_unique<nn::Generator<float>>(meta.preset, meta.num_params, derive_seed(seed, 0x6e, 0));
  b.discriminator =
      std::make_unique<nn::Discriminator<float>>(meta.preset, meta.num_params, derive_seed(seed, 0x6e, 1));
  b.adam_g = nn::Adam<float>(b.generator->weights().size(), adam);
  b.adam_d = nn::Adam<float>(b.discriminator->weights().size(), adam);
  return b;
}

void save_embedder(const nn::Embedder<float>& embedder, Archive& archive, const std::string& prefix) {
  archive.put_text(prefix + "meta", format_metadata({{"kind", nn::to_string(embedder.kind())},
                                                     {"image_size", std::to_string(embedder.image_size())}}));
  embedder.weights().save(archive, prefix);
}

std::unique_ptr<nn::Embedder<float>> load_embedder(const Archive& archive, const std::string& prefix) {
  const auto f = parse_metadata(archive.text(prefix + "meta"));
  auto e = std::make_unique<nn::Embedder<float>>(nn::embedder_kind_from_string(get(f, "kind")),
                                                 to_int(f, "image_size"), 0);
  e->weights().load(archive, prefix);
  return e;
}

Archive CheckpointBundle::to_archive() const {
  check(generator && discriminator, "checkpoint has no networks");
  Archive a;
  auto fields = meta.to_fields();
  fields["format"] = "slgan-checkpoint";
  fields["version"] = std::to_string(kVersion);
  a.put_text("meta", format_metadata(fields));
  generator->weights().save(a, "G/");
  discriminator->weights().save(a, "D/");
  adam_g.save(a, "adam_g/");
  adam_d.save(a, "adam_d/");
  if (embedder) save_embedder(*embedder, a, "E/");
  return a;
}

CheckpointBundle CheckpointBundle::from_archive(const Archive& a) {
  check<IoError>(a.contains("meta"), "not a checkpoint: no metadata record");
  const auto fields = parse_metadata(a.text("meta"));
  check<IoError>(fields.count("format") && fields.at("format") == "slgan-checkpoint", "not a checkpoint archive");
  check<IoError>(to_int(fields, "version") == kVersion, "unsupported checkpoint version {}", fields.at("version"));
  const ModelMeta meta = ModelMeta::from_fields(fields);
  CheckpointBundle b = initialize(meta, 0, {});
  b.generator->weights().load(a, "G/");
  b.discriminator->weights().load(a, "D/");
  if (a.contains("adam_g/m")) {
    b.adam_g.load(a, "adam_g/");
    b.adam_d.load(a, "adam_d/");
  }
  if (a.contains("E/meta")) b.embedder = load_embedder(a, "E/");
  return b;
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    check<IoError>(static_cast<bool>(out), "cannot open '{}' for writing", tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    check<IoError>(static_cast<bool>(out), "failed writing '{}'", tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  check<IoError>(!ec, "cannot move '{}' to '{}': {}", tmp, path, ec.message());
}

void CheckpointBundle::save(const std::string& path) const { write_file_atomic(path, to_archive().serialize()); }

CheckpointBundle CheckpointBundle::load(const std::string& path, const std::string& expected_basis_hash) {
  CheckpointBundle b = from_archive(Archive::read(path));
  check<IoError>(expected_basis_hash.empty() || b.meta.basis_hash == expected_basis_hash,
                 "checkpoint '{}' was trained with basis {} but basis {} was given", path, b.meta.basis_hash,
                 expected_basis_hash);
  return b;
}

void save_embedder_file(const nn::Embedder<float>& embedder, const std::string& path) {
  Archive a;
  a.put_text("format", "slgan-embedder");
  save_embedder(embedder, a, "E/");
  write_file_atomic(path, a.serialize());
}

std::unique_ptr<nn::Embedder<float>> load_embedder_file(const std::string& path) {
  const Archive a = Archive::read(path);
  check<IoError>(a.contains("format") && a.text("format") == "slgan-embedder", "'{}' is not an embedder file", path);
  return load_embedder(a, "E/");
}

}  // namespace slgan
