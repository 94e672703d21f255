// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/container.hpp"

#include "bevfield/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bevfield {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

std::vector<std::uint8_t>
encode_container(std::string_view magic, const nlohmann::json &header,
                 std::span<const float> payload) {
    if (magic.size() != 8) {
        fail(ErrorKind::internal, "container magic must be 8 bytes");
    }
    const std::string text = header.dump();
    const auto headerLen   = static_cast<std::uint32_t>(text.size());

    std::vector<std::uint8_t> out;
    out.reserve(12 + text.size() + payload.size_bytes());
    out.insert(out.end(), magic.begin(), magic.end());
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<std::uint8_t>((headerLen >> (8 * b)) & 0xffu));
    }
    out.insert(out.end(), text.begin(), text.end());
    const auto *raw = reinterpret_cast<const std::uint8_t *>(payload.data());
    out.insert(out.end(), raw, raw + payload.size_bytes());
    return out;
}

Container
decode_container(std::span<const std::uint8_t> bytes, std::string_view expectedMagic,
                 const std::function<std::size_t(const nlohmann::json &)> &payloadCount) {
    if (bytes.size() < 12) {
        fail(ErrorKind::invalid_argument, "container truncated: missing header");
    }
    Container c;
    c.magic.assign(reinterpret_cast<const char *>(bytes.data()), 8);
    if (c.magic != expectedMagic) {
        fail(ErrorKind::invalid_argument,
             "bad magic '" + c.magic + "', expected '" + std::string(expectedMagic) + "'");
    }
    std::uint32_t headerLen = 0;
    for (int b = 0; b < 4; ++b) {
        headerLen |= static_cast<std::uint32_t>(bytes[8 + b]) << (8 * b);
    }
    if (bytes.size() < 12 + static_cast<std::size_t>(headerLen)) {
        fail(ErrorKind::invalid_argument, "container truncated: header");
    }
    try {
        c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + headerLen);
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed container header: ") + e.what());
    }
    std::size_t count = 0;
    try {
        count = payloadCount(c.header);
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::invalid_argument, std::string("malformed container header: ") + e.what());
    }
    const std::size_t start = 12 + headerLen;
    if (bytes.size() - start != count * sizeof(float)) {
        fail(ErrorKind::invalid_argument,
             "container payload size mismatch: expected " + std::to_string(count) + " f32 values");
    }
    c.payload.resize(count);
    std::memcpy(c.payload.data(), bytes.data() + start, count * sizeof(float));
    return c;
}

std::vector<std::uint8_t>
read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "cannot open '" + path + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void
write_file(const std::string &path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorKind::io, "write to '" + path + "' failed");
    }
}

void
write_text_file(const std::string &path, std::string_view text) {
    write_file(path, {reinterpret_cast<const std::uint8_t *>(text.data()), text.size()});
}

} // namespace bevfield
