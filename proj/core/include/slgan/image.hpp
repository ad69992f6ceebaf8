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
#include <string>
#include <string_view>
#include <vector>

#include "slgan/nn/tensor.hpp"

namespace slgan {

/// Images are planar float batches with values in [-1, 1]; a single image is a
/// batch of one.
using ImageTensor = nn::Tensor<float>;
/// One channel, values in [0, 1].
using AttentionMask = nn::Tensor<float>;

/// 8-bit RGB PNG, values mapped from [-1, 1] by round((v + 1) / 2 * 255).
std::vector<std::uint8_t> encode_png(const ImageTensor& image, int index = 0);
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const ImageTensor& image, const std::string& path, int index = 0);
ImageTensor read_png(const std::string& path);

/// Values snapped to the 8-bit grid used on disk.
ImageTensor quantize_8bit(const ImageTensor& image);

/// Bilinear resize with half-pixel centers and edge clamping.
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);

/// Horizontal strip of same-sized images, separated by `gap` pixels of `fill`.
ImageTensor contact_sheet(const std::vector<ImageTensor>& images, int columns, int gap = 2, float fill = 1.0f);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace slgan
