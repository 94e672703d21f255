// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bevfield/signal.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bevfield {

/// 8-bit RGB PNG of a 3-channel image in [0, 1]; values are clamped and
/// rounded to the nearest level, after the sRGB transfer curve when `srgb` is
/// set. No time or text chunks, so equal images encode to equal bytes.
std::vector<std::uint8_t> encode_png(const Image &img, bool srgb = false);

/// Decodes 8-bit RGB or RGBA PNG data (alpha dropped) to values k / 255.
Image decode_png(std::span<const std::uint8_t> bytes);

void save_png(const Image &img, const std::string &path, bool srgb = false);
Image load_png(const std::string &path);

/// Quantization used by encode_png, exposed for tests.
std::uint8_t to_u8(double v);

/// Linear [0, 1] to sRGB-encoded [0, 1].
double linear_to_srgb(double v);

/// Raw image container (magic "IMGF0001", header {h, w, c}, f32 payload).
/// Values round to f32, so round trips are exact for f32-representable data.
std::vector<std::uint8_t> encode_image(const Image &img);
Image decode_image(std::span<const std::uint8_t> bytes);

} // namespace bevfield
