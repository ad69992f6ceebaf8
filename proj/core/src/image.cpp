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

#include "slgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace slgan {
namespace {

std::uint8_t to_byte(float v) {
  const float scaled = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 0.5f * 255.0f);
  return static_cast<std::uint8_t>(scaled);
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f * 2.0f - 1.0f; }

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageTensor& image, int index) {
  check<ShapeError>(image.c() == 3, "PNG encoding needs 3 channels, got {}", image.c());
  check<ShapeError>(index >= 0 && index < image.n(), "image index {} out of range", index);
  const int h = image.h();
  const int w = image.w();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        rgb[(static_cast<std::size_t>(y) * w + x) * 3 + ch] = to_byte(image.at(index, ch, y, x));
      }
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  check<IoError>(png_image_write_to_memory(&png, nullptr, &size, 0, rgb.data(), 0, nullptr) != 0,
                 "PNG size query failed: {}", png.message);
  std::vector<std::uint8_t> out(size);
  check<IoError>(png_image_write_to_memory(&png, out.data(), &size, 0, rgb.data(), 0, nullptr) != 0,
                 "PNG encoding failed: {}", png.message);
  out.resize(size);
  return out;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  check<IoError>(!bytes.empty() && png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()) != 0,
                 "not a readable PNG: {}", png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(png));
  const bool ok = png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr) != 0;
  if (!ok) png_image_free(&png);
  check<IoError>(ok, "PNG decoding failed: {}", png.message);
  const int h = static_cast<int>(png.height);
  const int w = static_cast<int>(png.width);
  ImageTensor image(1, 3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        image.at(0, ch, y, x) = from_byte(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + ch]);
      }
    }
  }
  return image;
}

void write_png(const ImageTensor& image, const std::string& path, int index) {
  const auto bytes = encode_png(image, index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<IoError>(static_cast<bool>(out), "cannot open '{}' for writing", path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  check<IoError>(static_cast<bool>(out), "write to '{}' failed", path);
}

ImageTensor read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check<IoError>(static_cast<bool>(in), "cannot open '{}'", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

ImageTensor quantize_8bit(const ImageTensor& image) {
  ImageTensor out = image;
  for (auto& v : out.span()) v = from_byte(to_byte(v));
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  check(height > 0 && width > 0, "resize target must be positive");
  if (image.h() == height && image.w() == width) return image;
  ImageTensor out(image.n(), image.c(), height, width);
  const double sy = static_cast<double>(image.h()) / height;
  const double sx = static_cast<double>(image.w()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.h() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.h() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.w() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.w() - 1);
      const double tx = fx - x0;
      for (int i = 0; i < image.n(); ++i) {
        for (int ch = 0; ch < image.c(); ++ch) {
          const double top = (1 - tx) * image.at(i, ch, y0, x0) + tx * image.at(i, ch, y0, x1);
          const double bottom = (1 - tx) * image.at(i, ch, y1, x0) + tx * image.at(i, ch, y1, x1);
          out.at(i, ch, y, x) = static_cast<float>((1 - ty) * top + ty * bottom);
        }
      }
    }
  }
  return out;
}

ImageTensor contact_sheet(const std::vector<ImageTensor>& images, int columns, int gap, float fill) {
  check(!images.empty() && columns > 0, "contact sheet needs images and a positive column count");
  const int h = images.front().h();
  const int w = images.front().w();
  const int c = images.front().c();
  const int count = static_cast<int>(images.size());
  const int rows = (count + columns - 1) / columns;
  const int cols = std::min(columns, count);
  ImageTensor sheet(1, c, rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, fill);
  for (int k = 0; k < count; ++k) {
    const auto& img = images[k];
    check<ShapeError>(img.h() == h && img.w() == w && img.c() == c, "contact sheet images differ in shape");
    const int oy = (k / columns) * (h + gap);
    const int ox = (k % columns) * (w + gap);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) sheet.at(0, ch, oy + y, ox + x) = img.at(0, ch, y, x);
      }
    }
  }
  return sheet;
}

namespace {
constexpr char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out.push_back(kBase64Alphabet[(v >> s) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kBase64Alphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kBase64Alphabet[k])] = k;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t padding = 0;
  for (char ch : text) {
    if (ch == '=') {
      ++padding;
      continue;
    }
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    check<IoError>(padding == 0, "base64 data after padding");
    const int v = lookup[static_cast<unsigned char>(ch)];
    check<IoError>(v >= 0, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  check<IoError>(padding <= 2, "invalid base64 padding");
  return out;
}

}  // namespace slgan
