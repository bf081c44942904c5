#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "stereorecon/frame.hpp"
#include "stereorecon/image_io.hpp"

namespace stereorecon {

/// Time-ordered stereo pairs addressable by frame index.
class FrameSource {
public:
    virtual ~FrameSource() = default;

    virtual std::int64_t size() const = 0;
    virtual std::int64_t height() const = 0;
    virtual std::int64_t width() const = 0;
    virtual Frame left(std::int64_t index) const = 0;
    virtual Frame right(std::int64_t index) const = 0;
};

/// Pairs held fully in memory. Used for synthetic scenes and small subsets.
class InMemoryStereo final : public FrameSource {
public:
    InMemoryStereo() = default;
    explicit InMemoryStereo(std::vector<std::pair<Frame, Frame>> pairs);

    /// Appends a pair; its index is reassigned to the next time step.
    void push_back(const torch::Tensor& left, const torch::Tensor& right);

    std::int64_t size() const override { return static_cast<std::int64_t>(pairs_.size()); }
    std::int64_t height() const override;
    std::int64_t width() const override;
    Frame left(std::int64_t index) const override;
    Frame right(std::int64_t index) const override;

    const std::vector<std::pair<Frame, Frame>>& pairs() const noexcept { return pairs_; }

private:
    std::vector<std::pair<Frame, Frame>> pairs_;
};

/// On-disk layout: two sibling directories of identically named images.
struct DatasetLayout {
    std::string left_dir = "left";
    std::string right_dir = "right";
    std::vector<std::string> extensions = {".png"};
};

struct StereoPairPaths {
    std::filesystem::path left;
    std::filesystem::path right;
};

/// Directory-backed pairs. Indexing validates names and dimensions; pixels are decoded on access.
class StereoDirectory final : public FrameSource {
public:
    StereoDirectory(std::vector<StereoPairPaths> paths, ImageSize size);

    std::int64_t size() const override { return static_cast<std::int64_t>(paths_.size()); }
    std::int64_t height() const override { return size_.height; }
    std::int64_t width() const override { return size_.width; }
    Frame left(std::int64_t index) const override;
    Frame right(std::int64_t index) const override;

    const std::vector<StereoPairPaths>& paths() const noexcept { return paths_; }

    /// Decodes every pair into memory.
    InMemoryStereo load_all() const;

private:
    Frame read_checked(const std::filesystem::path& path, std::int64_t index) const;

    std::vector<StereoPairPaths> paths_;
    ImageSize size_;
};

/// Indexes `root/left` and `root/right`; lexicographic file order defines time.
/// Throws DataError for structural problems and ItemError naming the offending file.
StereoDirectory load_stereo_dataset(const std::filesystem::path& root, const DatasetLayout& layout = {});

/// Writes every pair as `frame_NNNNNN.png` under `root/left` and `root/right`.
void write_stereo_dataset(const std::filesystem::path& root, const FrameSource& source,
                          const DatasetLayout& layout = {});

/// Half-open range of frame indices [start, start + length).
struct ChunkRange {
    std::int64_t start = 0;
    std::int64_t length = 0;

    std::int64_t end() const noexcept { return start + length; }
    bool contains(std::int64_t index) const noexcept { return index >= start && index < end(); }
    bool operator==(const ChunkRange&) const = default;
};

struct DatasetSplit {
    std::vector<ChunkRange> train;
    std::vector<ChunkRange> validation;
    std::int64_t chunk_length = 0;
    std::int64_t total_frames = 0;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    bool operator==(const DatasetSplit&) const = default;
};

enum class SplitPart { train, validation };

/// Cuts [0, total_frames) into full chunks (the trailing partial chunk is dropped) and
/// allocates round(train_fraction * chunks) of them, at least one, to training at random.
DatasetSplit make_splits(std::int64_t total_frames, std::int64_t chunk_length, double train_fraction,
                         std::uint64_t seed);

/// A split holding all frames of one part as a single chunk of `source_size` frames.
DatasetSplit single_chunk_split(std::int64_t source_size, SplitPart part = SplitPart::train);

nlohmann::json split_to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& j);
void write_split_manifest(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_split_manifest(const std::filesystem::path& path);

/// A window of `length` frames ending at `last`.
struct WindowRef {
    std::int64_t last = 0;
    std::int64_t length = 1;

    std::int64_t first() const noexcept { return last - length + 1; }
    bool operator==(const WindowRef&) const = default;
};

/// Every length-K window fully inside one chunk, chunk by chunk in order.
std::vector<WindowRef> sliding_window_samples(const std::vector<ChunkRange>& chunks, std::int64_t K);
std::vector<WindowRef> sliding_window_samples(const DatasetSplit& split, SplitPart part, std::int64_t K);

/// Seeded sample-level shuffle.
void shuffle_windows(std::vector<WindowRef>& windows, std::uint64_t seed);

StereoSample materialize(const FrameSource& source, const WindowRef& window);

/// Left frames of a window as [K, 3, H, W]. With `repeat_current` every slot holds the last frame.
torch::Tensor window_tensor(const FrameSource& source, const WindowRef& window, bool repeat_current = false);

/// Batches windows into inputs [B, K, 3, H, W] and right-view targets [B, 3, H, W].
std::pair<torch::Tensor, torch::Tensor> collate(const FrameSource& source, std::span<const WindowRef> windows,
                                                bool repeat_current = false);

}  // namespace stereorecon
