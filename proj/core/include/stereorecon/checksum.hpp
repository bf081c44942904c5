#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <torch/torch.h>

namespace stereorecon {

/// Hex-encoded SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::byte> bytes);

/// Hex-encoded SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

/// SHA-256 over the raw bytes of every parameter and buffer, in registration order.
std::string parameter_checksum(const torch::nn::Module& module);

}  // namespace stereorecon
