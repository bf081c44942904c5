#include "run_manifest.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "stereorecon/checkpoint.hpp"

namespace stereorecon::cli {

std::string tool_version() {
    std::string v = STEREORECON_TOOL_VERSION;
    const std::string rev = STEREORECON_GIT_REVISION;
    if (!rev.empty()) v += "+" + rev;
    return v;
}

void write_run_manifest(const std::filesystem::path& dir, const CLI::App& command, int argc, char** argv,
                        const nlohmann::json& seeds, const nlohmann::json& details) {
    std::filesystem::create_directories(dir);
    // Unset optional values come out as empty strings, which would not load back.
    std::istringstream resolved(command.config_to_str(true, false));
    std::string toml = "[" + command.get_name() + "]\n";
    for (std::string line; std::getline(resolved, line);)
        if (!line.ends_with("=\"\"")) toml += line + "\n";
    {
        std::ofstream out(dir / "run.toml");
        out << toml;
    }
    nlohmann::json args = nlohmann::json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    write_json_file(dir / "run_manifest.json", {{"subcommand", command.get_name()},
                                                {"version", tool_version()},
                                                {"command_line", args},
                                                {"config", toml},
                                                {"seeds", seeds},
                                                {"details", details},
                                                {"created", stamp}});
}

}  // namespace stereorecon::cli
