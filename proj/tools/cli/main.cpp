#include <iostream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "commands.hpp"
#include "run_manifest.hpp"
#include "stereorecon/error.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Right-view synthesis from monocular video: data, training, evaluation, ranking and studies",
                 "stereorecon"};
    app.set_version_flag("--version", stereorecon::cli::tool_version());
    app.set_config("--config", "", "TOML config file with one [subcommand] section; flags override it");
    app.require_subcommand(1);
    app.fallthrough();
    const auto runners = stereorecon::cli::register_commands(app, argc, argv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    try {
        runners.at(app.get_subcommands().front()->get_name())();
    } catch (const stereorecon::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const stereorecon::StudyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == stereorecon::StudyError::Kind::invalid ? kUsage : kData;
    } catch (const stereorecon::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const stereorecon::WeightsError& e) {
        std::cerr << "weights error: " << e.what() << '\n';
        return kData;
    } catch (const stereorecon::TrainingError& e) {
        std::cerr << "training failed: " << e.what() << '\n';
        if (!e.last_good_checkpoint().empty()) std::cerr << "last good checkpoint: " << e.last_good_checkpoint() << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
