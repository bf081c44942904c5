#include "stereorecon/checkpoint.hpp"

#include <fstream>

#include "stereorecon/checksum.hpp"
#include "stereorecon/error.hpp"

namespace fs = std::filesystem;

namespace stereorecon {

void to_json(nlohmann::json& j, const ModelManifest& m) {
    j = {{"format", "stereorecon.model/1"},
         {"config", m.config},
         {"init_seed", m.init_seed},
         {"model_id", m.model_id},
         {"step", m.step},
         {"parameter_sha256", m.parameter_sha256},
         {"extra", m.extra}};
}

void from_json(const nlohmann::json& j, ModelManifest& m) {
    m.config = j.at("config").get<ModelConfig>();
    m.init_seed = j.value("init_seed", std::uint64_t{0});
    m.model_id = j.value("model_id", std::string("model"));
    m.step = j.value("step", std::int64_t{0});
    m.parameter_sha256 = j.value("parameter_sha256", std::string());
    m.extra = j.value("extra", nlohmann::json::object());
}

void write_json_file(const fs::path& path, const nlohmann::json& value) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << value.dump(2) << '\n';
        if (!out) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void save_model(const fs::path& dir, StereoUNet& network, ModelManifest manifest) {
    fs::create_directories(dir);
    manifest.config = network->config();
    manifest.parameter_sha256 = parameter_checksum(*network);
    torch::save(network, (dir / kModelFile).string());
    write_json_file(dir / kManifestFile, manifest);
}

ModelManifest read_model_manifest(const fs::path& dir) {
    try {
        return read_json_file(dir / kManifestFile).get<ModelManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed model manifest in " + dir.string() + ": " + e.what());
    }
}

LoadedModel load_model(const fs::path& dir) {
    LoadedModel loaded;
    loaded.manifest = read_model_manifest(dir);
    if (!fs::exists(dir / kModelFile)) throw DataError("missing " + (dir / kModelFile).string());
    loaded.network = StereoUNet(loaded.manifest.config);
    try {
        torch::load(loaded.network, (dir / kModelFile).string());
    } catch (const c10::Error& e) {
        throw ConfigError("checkpoint " + dir.string() + " does not match its manifest: " + e.what_without_backtrace());
    }
    if (!loaded.manifest.parameter_sha256.empty() &&
        parameter_checksum(*loaded.network) != loaded.manifest.parameter_sha256)
        throw WeightsError("parameter checksum mismatch in " + dir.string());
    return loaded;
}

}  // namespace stereorecon
