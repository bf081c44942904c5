#pragma once

#include <functional>
#include <map>
#include <string>

#include <CLI11.hpp>

namespace stereorecon::cli {

using Runners = std::map<std::string, std::function<void()>>;

/// Adds every subcommand to `app` and returns the action of each, keyed by subcommand name.
Runners register_commands(CLI::App& app, int argc, char** argv);

}  // namespace stereorecon::cli
