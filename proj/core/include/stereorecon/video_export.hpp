#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stereorecon/evaluate.hpp"
#include "stereorecon/frame.hpp"

namespace stereorecon {

enum class StereoLayout { side_by_side, anaglyph };

std::string to_string(StereoLayout layout);
StereoLayout parse_stereo_layout(const std::string& text);

/// side_by_side: [3, H, 2W] with the left view first. anaglyph: red from left, green and blue from right.
torch::Tensor compose_stereo(const torch::Tensor& left, const torch::Tensor& right, StereoLayout layout);

struct VideoExportOptions {
    StereoLayout layout = StereoLayout::side_by_side;
    double fps = 20.0;
    /// Every composed frame is written here as frame_NNNNNN.png when set.
    std::optional<std::filesystem::path> png_dir;
    /// Encoded video when set. ".mkv" tries lossless FFV1, ".avi" Motion-JPEG.
    std::optional<std::filesystem::path> video_path;
    std::int64_t batch_size = 4;
};

struct VideoExportResult {
    std::int64_t frame_count = 0;
    std::int64_t first_source_index = 0;  ///< index of the left frame behind output frame 0
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::optional<std::filesystem::path> video_path;
    std::string codec;
};

/// Output frame t pairs left frame t + K - 1 with its prediction; the first K - 1 frames only fill
/// the window. Throws ConfigError when the sequence is shorter than K.
VideoExportResult export_stereo_video(const std::vector<Frame>& left_frames, Predictor& predictor,
                                      const VideoExportOptions& options);

}  // namespace stereorecon
