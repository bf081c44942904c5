#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace stereorecon {

/// One RGB video frame stored as a float tensor of shape [3, H, W] with values in [0, 1].
class Frame {
public:
    Frame() = default;

    /// Validates shape, dtype and range; throws ShapeError on violation.
    Frame(torch::Tensor pixels, std::int64_t index);

    const torch::Tensor& pixels() const noexcept { return pixels_; }
    std::int64_t index() const noexcept { return index_; }
    std::int64_t height() const { return pixels_.size(1); }
    std::int64_t width() const { return pixels_.size(2); }

private:
    torch::Tensor pixels_;
    std::int64_t index_ = 0;
};

/// The K most recent left-view frames, oldest first. Indices are consecutive.
class FrameWindow {
public:
    explicit FrameWindow(std::vector<Frame> frames);

    std::int64_t length() const noexcept { return static_cast<std::int64_t>(frames_.size()); }
    const std::vector<Frame>& frames() const noexcept { return frames_; }
    const Frame& current() const { return frames_.back(); }
    std::int64_t height() const { return frames_.front().height(); }
    std::int64_t width() const { return frames_.front().width(); }

    /// [K, 3, H, W]
    torch::Tensor to_tensor() const;

private:
    std::vector<Frame> frames_;
};

/// Left-view window paired with the right view at the window's final index.
struct StereoSample {
    StereoSample(FrameWindow input, Frame target);

    FrameWindow input;
    Frame target;
};

}  // namespace stereorecon
