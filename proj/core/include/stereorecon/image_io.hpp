#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <torch/torch.h>

#include "stereorecon/frame.hpp"

namespace stereorecon {

struct ImageSize {
    std::int64_t width = 0;
    std::int64_t height = 0;
    bool operator==(const ImageSize&) const = default;
};

/// Reads an 8- or 16-bit image as an RGB Frame normalised to [0, 1]. Throws ItemError.
Frame read_frame(const std::filesystem::path& path, std::int64_t index);

/// Writes a [3, H, W] tensor as an 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const torch::Tensor& rgb);

/// Image dimensions from the file header without decoding pixels. Throws ItemError.
ImageSize probe_image_size(const std::filesystem::path& path);

/// Rounds to the nearest representable 8-bit level, i.e. what a PNG round trip preserves.
torch::Tensor quantize_8bit(const torch::Tensor& rgb);

}  // namespace stereorecon
