#pragma once

#include <filesystem>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace stereorecon::cli {

/// Version string baked in at configure time: project version plus git revision when known.
std::string tool_version();

/// Writes `dir/run.toml` (the subcommand's resolved options, loadable with --config) and
/// `dir/run_manifest.json` (command, options, seeds, version, extra details).
void write_run_manifest(const std::filesystem::path& dir, const CLI::App& command, int argc, char** argv,
                        const nlohmann::json& seeds, const nlohmann::json& details = nlohmann::json::object());

}  // namespace stereorecon::cli
