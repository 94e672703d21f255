// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include "bevfield/common.hpp"
#include "bevfield/container.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>

namespace {

using nlohmann::json;
using namespace bevfield;

int
exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::invalid_argument:
    case ErrorKind::out_of_range: return 2;
    case ErrorKind::not_found:
    case ErrorKind::io: return 3;
    case ErrorKind::internal: return 1;
    }
    return 1;
}

std::string
flag_name(const std::string &key) {
    std::string s = key;
    std::replace(s.begin(), s.end(), '_', '-');
    return "--" + s;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"bevfield: BEV-conditioned radiance field engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kEngineVersion));

    struct Sub {
        CLI::App *app = nullptr;
        std::map<std::string, std::string> raw; // key -> flag text
        std::string out = "out";
        std::string config;
    };
    std::map<std::string, Sub> subs;
    for (const auto &spec : cli::commands()) {
        Sub &s = subs[spec.name];
        s.app  = app.add_subcommand(spec.name, spec.help);
        for (const auto &f : spec.fields) {
            s.app->add_option(flag_name(f.key), s.raw[f.key], f.help + " (default " + f.fallback.dump() + ")");
        }
        s.app->add_option("--out", s.out, "output directory")->capture_default_str();
        s.app->add_option("--config", s.config, "JSON file of option values; flags override it");
    }
    std::string replayManifest, replayOut;
    CLI::App *replayCmd = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
    replayCmd->add_option("manifest", replayManifest, "manifest.json of the run")->required();
    replayCmd->add_option("--out", replayOut, "output directory (default: <run>/replay)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (replayCmd->parsed()) {
            if (replayOut.empty()) {
                replayOut = (std::filesystem::path(replayManifest).parent_path() / "replay").string();
            }
            const auto res = cli::replay(replayManifest, replayOut, std::cout);
            for (const auto &m : res.mismatches) {
                std::cout << "MISMATCH " << m << "\n";
            }
            std::cout << (res.ok ? "replay: identical outputs\n" : "replay: outputs differ\n");
            return res.ok ? 0 : 4;
        }
        for (auto &[name, s] : subs) {
            if (!s.app->parsed()) {
                continue;
            }
            const auto &spec = cli::command(name);
            json config      = cli::default_config(spec);
            if (!s.config.empty()) {
                const auto bytes = read_file(s.config);
                json file;
                try {
                    file = json::parse(bytes.begin(), bytes.end());
                } catch (const json::exception &e) {
                    fail(ErrorKind::invalid_argument, std::string("malformed --config: ") + e.what());
                }
                if (!file.is_object()) {
                    fail(ErrorKind::invalid_argument, "--config must hold a JSON object");
                }
                for (const auto &[k, v] : file.items()) {
                    config[k] = v;
                }
            }
            for (const auto &f : spec.fields) {
                if (s.app->count(flag_name(f.key)) > 0) {
                    config[f.key] = cli::parse_value(f, s.raw.at(f.key));
                }
            }
            cli::run(name, config, s.out, std::cout);
            return 0;
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
