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

#include "slgan/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "slgan/common.hpp"

namespace slgan {
namespace {

constexpr char kMagic[8] = {'S', 'L', 'G', 'A', 'N', 'A', 'R', 'C'};

enum class EntryType : std::uint8_t { kText = 0, kFloat64 = 1, kFloat32 = 2 };

template <typename U>
void append_le(std::vector<std::uint8_t>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <typename F, typename U>
void append_floats(std::vector<std::uint8_t>& out, const std::vector<F>& values) {
  out.reserve(out.size() + values.size() * sizeof(F));
  for (F v : values) append_le(out, std::bit_cast<U>(v));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename U>
  U read() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string read_string(std::size_t length) {
    need(length);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), length);
    pos_ += length;
    return s;
  }

  template <typename F, typename U>
  std::vector<F> read_floats(std::uint64_t count) {
    check<IoError>(count <= (bytes_.size() - pos_) / sizeof(F), "archive truncated");
    std::vector<F> values(count);
    for (auto& v : values) v = std::bit_cast<F>(read<U>());
    return values;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const { check<IoError>(bytes_.size() - pos_ >= n, "archive truncated"); }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::put(const std::string& name, Payload payload) {
  check(!name.empty(), "archive entry name must be non-empty");
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  if (it != entries_.end()) {
    it->second = std::move(payload);
  } else {
    entries_.emplace_back(name, std::move(payload));
  }
}

void Archive::put_text(const std::string& name, std::string text) { put(name, std::move(text)); }
void Archive::put_f64(const std::string& name, std::vector<double> values) { put(name, std::move(values)); }
void Archive::put_f32(const std::string& name, std::vector<float> values) { put(name, std::move(values)); }

bool Archive::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Archive::Payload& Archive::get(const std::string& name) const {
  for (const auto& [key, payload] : entries_) {
    if (key == name) return payload;
  }
  throw IoError(fmt::format("archive has no entry '{}'", name));
}

const std::string& Archive::text(const std::string& name) const {
  const auto* p = std::get_if<std::string>(&get(name));
  check<IoError>(p != nullptr, "archive entry '{}' is not text", name);
  return *p;
}

const std::vector<double>& Archive::f64(const std::string& name) const {
  const auto* p = std::get_if<std::vector<double>>(&get(name));
  check<IoError>(p != nullptr, "archive entry '{}' is not float64", name);
  return *p;
}

const std::vector<float>& Archive::f32(const std::string& name) const {
  const auto* p = std::get_if<std::vector<float>>(&get(name));
  check<IoError>(p != nullptr, "archive entry '{}' is not float32", name);
  return *p;
}

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::vector<std::uint8_t> Archive::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  append_le(out, kVersion);
  append_le(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, payload] : entries_) {
    append_le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (const auto* text = std::get_if<std::string>(&payload)) {
      out.push_back(static_cast<std::uint8_t>(EntryType::kText));
      append_le(out, static_cast<std::uint64_t>(text->size()));
      out.insert(out.end(), text->begin(), text->end());
    } else if (const auto* f64 = std::get_if<std::vector<double>>(&payload)) {
      out.push_back(static_cast<std::uint8_t>(EntryType::kFloat64));
      append_le(out, static_cast<std::uint64_t>(f64->size()));
      append_floats<double, std::uint64_t>(out, *f64);
    } else {
      const auto& f32 = std::get<std::vector<float>>(payload);
      out.push_back(static_cast<std::uint8_t>(EntryType::kFloat32));
      append_le(out, static_cast<std::uint64_t>(f32.size()));
      append_floats<float, std::uint32_t>(out, f32);
    }
  }
  return out;
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& bytes) {
  check<IoError>(bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
                 "not an slgan archive (bad magic)");
  const std::vector<std::uint8_t> body(bytes.begin() + sizeof(kMagic), bytes.end());
  Reader reader(body);
  const auto version = reader.read<std::uint32_t>();
  check<IoError>(version == kVersion, "unsupported archive version {}", version);
  const auto count = reader.read<std::uint32_t>();
  Archive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = reader.read_string(reader.read<std::uint32_t>());
    const auto type = static_cast<EntryType>(reader.read<std::uint8_t>());
    const auto n = reader.read<std::uint64_t>();
    switch (type) {
      case EntryType::kText:
        archive.put_text(name, reader.read_string(n));
        break;
      case EntryType::kFloat64:
        archive.put_f64(name, reader.read_floats<double, std::uint64_t>(n));
        break;
      case EntryType::kFloat32:
        archive.put_f32(name, reader.read_floats<float, std::uint32_t>(n));
        break;
      default:
        throw IoError(fmt::format("archive entry '{}' has unknown type", name));
    }
  }
  check<IoError>(reader.done(), "trailing bytes after archive entries");
  return archive;
}

void Archive::write(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(out), "cannot open '{}' for writing", path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check<IoError>(static_cast<bool>(out), "write to '{}' failed", path);
}

Archive Archive::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<IoError>(static_cast<bool>(in), "cannot open '{}'", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string format_metadata(const std::map<std::string, std::string>& fields) {
  std::string out;
  for (const auto& [key, value] : fields) {
    check(key.find_first_of("=\n") == std::string::npos && value.find('\n') == std::string::npos,
          "metadata field '{}' contains a reserved character", key);
    out += key + "=" + value + "\n";
  }
  return out;
}

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> fields;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    check<IoError>(eq != std::string::npos, "malformed metadata line '{}'", line);
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return fields;
}

}  // namespace slgan
