// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bevfield {

/// On-disk layout shared by every binary artifact the engine writes:
///
///   8 bytes   magic (ASCII, e.g. "BEVMAP01")
///   u32 LE    header length in bytes
///   ...       UTF-8 JSON header
///   ...       little-endian f32 payload
struct Container {
    std::string magic;
    nlohmann::json header;
    std::vector<float> payload;
};

std::vector<std::uint8_t> encode_container(std::string_view magic,
                                           const nlohmann::json &header,
                                           std::span<const float> payload);

/// Throws Error(invalid_argument) on a magic mismatch or truncated data.
/// `payloadCount` is the number of f32 values expected after the header.
Container decode_container(std::span<const std::uint8_t> bytes,
                           std::string_view expectedMagic,
                           const std::function<std::size_t(const nlohmann::json &)> &payloadCount);

std::vector<std::uint8_t> read_file(const std::string &path);
void write_file(const std::string &path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::string &path, std::string_view text);

} // namespace bevfield
