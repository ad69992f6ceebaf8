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

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace slgan {

/// Named-array container shared by basis files and checkpoints.
///
/// Byte layout (all integers and floats little-endian):
///
///     "SLGANARC"                8-byte magic
///     u32 version               currently 1
///     u32 entry_count
///     entry_count times:
///       u32 name_length, name bytes
///       u8  type                0 = text, 1 = float64, 2 = float32
///       u64 count               bytes for text, elements for arrays
///       payload
///
/// Entries keep insertion order, so write(read(bytes)) reproduces the input
/// byte for byte.
class Archive {
 public:
  using Payload = std::variant<std::string, std::vector<double>, std::vector<float>>;

  static constexpr std::uint32_t kVersion = 1;

  void put_text(const std::string& name, std::string text);
  void put_f64(const std::string& name, std::vector<double> values);
  void put_f32(const std::string& name, std::vector<float> values);

  bool contains(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<float>& f32(const std::string& name) const;
  std::vector<std::string> names() const;

  std::vector<std::uint8_t> serialize() const;
  static Archive deserialize(const std::vector<std::uint8_t>& bytes);

  void write(const std::string& path) const;
  static Archive read(const std::string& path);

 private:
  void put(const std::string& name, Payload payload);
  const Payload& get(const std::string& name) const;

  std::vector<std::pair<std::string, Payload>> entries_;
};

/// `key=value` lines, the metadata record stored as a text entry.
std::string format_metadata(const std::map<std::string, std::string>& fields);
std::map<std::string, std::string> parse_metadata(const std::string& text);

}  // namespace slgan
