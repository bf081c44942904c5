#include "stereorecon/video_export.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/core.hpp>
#include <opencv2/videoio.hpp>

#include "stereorecon/error.hpp"
#include "stereorecon/image_io.hpp"

namespace stereorecon {
namespace {

cv::Mat to_bgr8(const torch::Tensor& rgb) {
    auto hwc = (rgb.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).flip({2}).contiguous();
    cv::Mat view(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<std::uint8_t>());
    return view.clone();
}

std::string frame_name(std::int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06lld.png", static_cast<long long>(index));
    return buf;
}

}  // namespace

std::string to_string(StereoLayout layout) {
    return layout == StereoLayout::side_by_side ? "side_by_side" : "anaglyph";
}

StereoLayout parse_stereo_layout(const std::string& text) {
    if (text == "side_by_side" || text == "sbs") return StereoLayout::side_by_side;
    if (text == "anaglyph") return StereoLayout::anaglyph;
    throw ConfigError("unknown stereo layout '" + text + "' (expected side_by_side or anaglyph)");
}

torch::Tensor compose_stereo(const torch::Tensor& left, const torch::Tensor& right, StereoLayout layout) {
    if (left.dim() != 3 || !left.sizes().equals(right.sizes()) || left.size(0) != 3)
        throw ShapeError("compose_stereo expects two [3, H, W] views of equal size");
    if (layout == StereoLayout::side_by_side) return torch::cat({left, right}, 2);
    return torch::cat({left.narrow(0, 0, 1), right.narrow(0, 1, 2)}, 0);
}

VideoExportResult export_stereo_video(const std::vector<Frame>& left_frames, Predictor& predictor,
                                      const VideoExportOptions& options) {
    const auto k = predictor.frames();
    const auto n = static_cast<std::int64_t>(left_frames.size());
    if (n < 1) throw ConfigError("no frames to export");
    if (n < k) {
        throw ConfigError("sequence of " + std::to_string(n) + " frames is shorter than the model's window of " +
                          std::to_string(k));
    }
    if (options.fps <= 0.0) throw ConfigError("fps must be positive");
    if (options.batch_size < 1) throw ConfigError("batch_size must be positive");

    VideoExportResult result;
    result.first_source_index = left_frames[static_cast<std::size_t>(k - 1)].index();
    const auto h = left_frames.front().height();
    const auto w = left_frames.front().width();
    result.height = h;
    result.width = options.layout == StereoLayout::side_by_side ? 2 * w : w;

    if (options.png_dir) std::filesystem::create_directories(*options.png_dir);
    cv::VideoWriter writer;
    if (options.video_path) {
        if (options.video_path->has_parent_path()) std::filesystem::create_directories(options.video_path->parent_path());
        const cv::Size size(static_cast<int>(result.width), static_cast<int>(result.height));
        const auto ext = options.video_path->extension().string();
        std::vector<std::pair<std::string, int>> candidates;
        if (ext == ".mkv") candidates.emplace_back("FFV1", cv::VideoWriter::fourcc('F', 'F', 'V', '1'));
        candidates.emplace_back("MJPG", cv::VideoWriter::fourcc('M', 'J', 'P', 'G'));
        for (const auto& [name, fourcc] : candidates) {
            if (writer.open(options.video_path->string(), fourcc, options.fps, size, true)) {
                result.codec = name;
                break;
            }
        }
        if (!writer.isOpened()) throw Error("no video encoder could open " + options.video_path->string());
        result.video_path = options.video_path;
    }

    for (std::int64_t last = k - 1; last < n; last += options.batch_size) {
        const auto end = std::min(n, last + options.batch_size);
        std::vector<torch::Tensor> windows;
        for (auto t = last; t < end; ++t) {
            std::vector<torch::Tensor> frames;
            for (auto s = t - k + 1; s <= t; ++s) frames.push_back(left_frames[static_cast<std::size_t>(s)].pixels());
            windows.push_back(torch::stack(frames));
        }
        const auto predictions = predictor.predict(torch::stack(windows));
        for (auto t = last; t < end; ++t) {
            const auto& left = left_frames[static_cast<std::size_t>(t)];
            if (left.height() != h || left.width() != w) throw ShapeError("frame sizes vary within the sequence");
            auto composed = compose_stereo(left.pixels(), predictions[t - last], options.layout);
            if (options.png_dir) write_png(*options.png_dir / frame_name(result.frame_count), composed);
            if (writer.isOpened()) writer.write(to_bgr8(composed));
            ++result.frame_count;
        }
    }
    writer.release();
    return result;
}

}  // namespace stereorecon
