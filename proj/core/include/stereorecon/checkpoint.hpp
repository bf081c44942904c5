#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "stereorecon/model.hpp"

namespace stereorecon {

/// Sidecar manifest written next to every model checkpoint. It is the compatibility contract:
/// a checkpoint is loaded by rebuilding the network from `config` and reading `model.pt` into it.
struct ModelManifest {
    ModelConfig config;
    std::uint64_t init_seed = 0;
    std::string model_id = "model";
    std::int64_t step = 0;
    std::string parameter_sha256;
    nlohmann::json extra = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const ModelManifest& m);
void from_json(const nlohmann::json& j, ModelManifest& m);

inline constexpr const char* kModelFile = "model.pt";
inline constexpr const char* kManifestFile = "manifest.json";

/// Writes `dir/model.pt` and `dir/manifest.json`. The checksum field is filled in from the network.
void save_model(const std::filesystem::path& dir, StereoUNet& network, ModelManifest manifest);

ModelManifest read_model_manifest(const std::filesystem::path& dir);

struct LoadedModel {
    StereoUNet network{nullptr};
    ModelManifest manifest;
};

/// Rebuilds the network from the manifest and loads its parameters; verifies the checksum.
LoadedModel load_model(const std::filesystem::path& dir);

/// Writes JSON text atomically (temp file + rename).
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace stereorecon
