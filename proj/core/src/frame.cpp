#include "stereorecon/frame.hpp"

#include <sstream>

#include "stereorecon/error.hpp"

namespace stereorecon {

Frame::Frame(torch::Tensor pixels, std::int64_t index) : pixels_(std::move(pixels)), index_(index) {
    if (!pixels_.defined() || pixels_.dim() != 3 || pixels_.size(0) != 3)
        throw ShapeError("frame must be a [3, H, W] tensor");
    if (pixels_.size(1) <= 0 || pixels_.size(2) <= 0) throw ShapeError("frame must have H > 0 and W > 0");
    if (pixels_.scalar_type() != torch::kFloat32) pixels_ = pixels_.to(torch::kFloat32);
    if (index_ < 0) throw ShapeError("frame index must be non-negative");
    if (pixels_.numel() > 0) {
        const auto lo = pixels_.min().item<float>();
        const auto hi = pixels_.max().item<float>();
        if (!(lo >= 0.0F && hi <= 1.0F)) {
            std::ostringstream msg;
            msg << "frame " << index_ << " values outside [0, 1]: [" << lo << ", " << hi << "]";
            throw ShapeError(msg.str());
        }
    }
}

FrameWindow::FrameWindow(std::vector<Frame> frames) : frames_(std::move(frames)) {
    if (frames_.empty()) throw ShapeError("frame window needs at least one frame");
    const auto h = frames_.front().height();
    const auto w = frames_.front().width();
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        if (frames_[i].height() != h || frames_[i].width() != w)
            throw ShapeError("frames in a window must share H and W");
        if (i > 0 && frames_[i].index() != frames_[i - 1].index() + 1)
            throw ShapeError("frame indices in a window must be consecutive and ascending");
    }
}

torch::Tensor FrameWindow::to_tensor() const {
    std::vector<torch::Tensor> parts;
    parts.reserve(frames_.size());
    for (const auto& f : frames_) parts.push_back(f.pixels());
    return torch::stack(parts);
}

StereoSample::StereoSample(FrameWindow input_, Frame target_)
    : input(std::move(input_)), target(std::move(target_)) {
    if (target.index() != input.current().index())
        throw ShapeError("target index must equal the window's last index");
    if (target.height() != input.height() || target.width() != input.width())
        throw ShapeError("target dimensions must equal input dimensions");
}

}  // namespace stereorecon
