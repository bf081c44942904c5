#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stereorecon/baseline.hpp"
#include "stereorecon/dataset.hpp"
#include "stereorecon/metrics.hpp"
#include "stereorecon/model.hpp"

namespace stereorecon {

/// Anything that maps a window of left frames to a right view.
class Predictor {
public:
    virtual ~Predictor() = default;
    /// Number of left frames consumed per prediction.
    virtual std::int64_t frames() const = 0;
    /// [B, K, 3, H, W] -> [B, 3, H, W], values clamped to [0, 1].
    virtual torch::Tensor predict(const torch::Tensor& windows) = 0;
    virtual std::string id() const = 0;
};

class NetworkPredictor final : public Predictor {
public:
    NetworkPredictor(StereoUNet network, std::string model_id, bool repeat_current_frame = false);

    std::int64_t frames() const override;
    torch::Tensor predict(const torch::Tensor& windows) override;
    std::string id() const override { return model_id_; }

private:
    StereoUNet network_;
    std::string model_id_;
    bool repeat_current_;
};

/// The horizontal-shift baseline as a predictor (delta 0 with copy fill is the identity).
class ShiftPredictor final : public Predictor {
public:
    ShiftPredictor(std::int64_t delta, FillPolicy fill, std::string model_id = "shift");

    std::int64_t frames() const override { return 1; }
    torch::Tensor predict(const torch::Tensor& windows) override;
    std::string id() const override { return model_id_; }

private:
    std::int64_t delta_;
    FillPolicy fill_;
    std::string model_id_;
};

/// Weight files for the deep metrics. Unset paths skip the metric with a note unless
/// `seeded_fallback` is set, in which case a seeded extractor and uniform calibration stand in.
struct MetricSuiteOptions {
    std::optional<std::filesystem::path> vgg_weights;
    std::optional<std::filesystem::path> lpips_weights;
    std::optional<std::filesystem::path> dists_weights;
    std::optional<std::uint64_t> seeded_fallback;
    bool compute_fid = true;
};

struct MetricSuite {
    std::shared_ptr<Lpips> lpips;
    std::shared_ptr<Dists> dists;
    std::shared_ptr<FeatureEmbedder> embedder;
    std::map<std::string, std::string> notes;

    /// Throws WeightsError when a path is given but cannot be loaded.
    static MetricSuite load(const MetricSuiteOptions& options);
};

struct EvaluationOptions {
    std::int64_t batch_size = 8;
    /// Targets are the last frames of windows of this length (at least the predictor's K), so
    /// models with different K are scored on the same frames.
    std::int64_t align_frames = 0;
    std::string set_id = "validation";
};

/// Windows scored for `predictor` on `chunks`.
std::vector<WindowRef> evaluation_windows(const std::vector<ChunkRange>& chunks, std::int64_t frames,
                                          std::int64_t align_frames);

/// Mean metrics of the predictor over the given chunks. Per-sample values are accumulated in
/// frame order, so the result does not depend on batch composition.
MetricReport evaluate(Predictor& predictor, const FrameSource& source, const std::vector<ChunkRange>& chunks,
                      MetricSuite& suite, const EvaluationOptions& options = {});

}  // namespace stereorecon
