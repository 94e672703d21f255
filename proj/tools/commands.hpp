// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace bevfield::cli {

enum class FieldType { integer, unsigned_int, real, string, boolean, int_list, uint_list, string_list };

/// One command option. The flag is `--` + key with '_' replaced by '-'.
struct Field {
    std::string key;
    FieldType type;
    nlohmann::json fallback;
    std::string help;
};

struct CommandSpec {
    std::string name;
    std::string help;
    std::vector<Field> fields;
    bool replayable = true;
};

const std::vector<CommandSpec> &commands();
const CommandSpec &command(const std::string &name);

/// Defaults of every field.
nlohmann::json default_config(const CommandSpec &spec);

/// Parses a flag value into the JSON type of `f`. Lists are comma separated.
nlohmann::json parse_value(const Field &f, const std::string &text);

/// Checks that `config` has exactly the spec's keys with the right types.
void check_config(const CommandSpec &spec, const nlohmann::json &config);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::string &path);

/// Runs a command with a complete config, writing outputs and manifest.json
/// under out_dir. Returns the manifest. Throws bevfield::Error on failure.
nlohmann::json run(const std::string &name, const nlohmann::json &config, const std::string &out_dir,
                   std::ostream &log);

struct ReplayResult {
    bool ok = true;
    std::vector<std::string> mismatches; // relative output paths
    nlohmann::json manifest;             // of the re-run
};

/// Re-runs the command recorded in a manifest into out_dir and compares every
/// output's SHA-256 with the recorded one.
ReplayResult replay(const std::string &manifest_path, const std::string &out_dir, std::ostream &log);

} // namespace bevfield::cli
