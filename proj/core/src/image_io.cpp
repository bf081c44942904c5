#include "stereorecon/image_io.hpp"

#include <array>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "stereorecon/error.hpp"

namespace stereorecon {
namespace {

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

Frame read_frame(const std::filesystem::path& path, std::int64_t index) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw ItemError(path, "unreadable image");

    cv::Mat bgr;
    switch (raw.channels()) {
        case 1: cv::cvtColor(raw, bgr, cv::COLOR_GRAY2BGR); break;
        case 3: bgr = raw; break;
        case 4: cv::cvtColor(raw, bgr, cv::COLOR_BGRA2BGR); break;
        default: throw ItemError(path, "unsupported channel count " + std::to_string(raw.channels()));
    }
    double max_level = 0.0;
    switch (bgr.depth()) {
        case CV_8U: max_level = 255.0; break;
        case CV_16U: max_level = 65535.0; break;
        default: throw ItemError(path, "unsupported bit depth");
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f32;
    rgb.convertTo(f32, CV_32FC3);

    // Divide in float32 so that 8-bit data matches quantize_8bit bit for bit.
    auto hwc = torch::from_blob(f32.data, {f32.rows, f32.cols, 3}, torch::kFloat32);
    return Frame(hwc.permute({2, 0, 1}).div(max_level).contiguous(), index);
}

void write_png(const std::filesystem::path& path, const torch::Tensor& rgb) {
    if (rgb.dim() != 3 || rgb.size(0) != 3) throw ShapeError("write_png expects a [3, H, W] tensor");
    auto bytes = (rgb.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                     .round()
                     .to(torch::kUInt8)
                     .permute({1, 2, 0})
                     .contiguous();
    cv::Mat view(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) throw ItemError(path, "failed to write PNG");
}

ImageSize probe_image_size(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ItemError(path, "unreadable image");
    std::array<unsigned char, 24> head{};
    in.read(reinterpret_cast<char*>(head.data()), head.size());
    static constexpr std::array<unsigned char, 8> kPngMagic = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (in.gcount() == static_cast<std::streamsize>(head.size()) &&
        std::equal(kPngMagic.begin(), kPngMagic.end(), head.begin())) {
        return {static_cast<std::int64_t>(read_be32(&head[16])), static_cast<std::int64_t>(read_be32(&head[20]))};
    }
    // Not a PNG: decode to find out.
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw ItemError(path, "unreadable image");
    return {m.cols, m.rows};
}

torch::Tensor quantize_8bit(const torch::Tensor& rgb) {
    return (rgb.clamp(0.0, 1.0) * 255.0).round() / 255.0;
}

}  // namespace stereorecon
