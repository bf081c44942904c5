#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "stereorecon/features.hpp"

namespace stereorecon {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// Peak signal-to-noise ratio in dB for [0, 1] images, 10 log10(1 / MSE), capped at kPsnrCap.
double psnr(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, valid windows
/// only, averaged over channels. Input [3, H, W]; throws ShapeError when H or W < 11.
double ssim(const torch::Tensor& pred, const torch::Tensor& target);

struct FidResult {
    double value = 0.0;
    bool regularized = false;  ///< covariances received +1e-6 I because a set was too small
};

/// Frechet distance between Gaussians fitted to two feature sets [N, D] and [M, D].
FidResult fid(const torch::Tensor& features_a, const torch::Tensor& features_b);

/// Maps image batches [B, 3, H, W] in [0, 1] to feature vectors [B, D] for FID.
class FeatureEmbedder {
public:
    virtual ~FeatureEmbedder() = default;
    virtual torch::Tensor embed(const torch::Tensor& images) = 0;
    virtual std::string name() const = 0;
};

/// Global-average-pooled last VGG16 block (512-d). The default when no Inception features are given.
class VggPoolEmbedder final : public FeatureEmbedder {
public:
    explicit VggPoolEmbedder(const FeatureWeights& weights);
    torch::Tensor embed(const torch::Tensor& images) override;
    std::string name() const override;

private:
    Vgg16Trunk trunk_{nullptr};
};

/// Per-layer channel weights of LPIPS (the published `lin` layers).
struct LpipsCalibration {
    std::vector<torch::Tensor> weights;  ///< five [C] tensors, non-negative
    std::string checksum;
    bool published = false;

    /// Loads `lin{l}.model.1.weight` from an LPIPS VGG weights file.
    static LpipsCalibration from_file(const std::filesystem::path& path);
    /// Unit weights: the uncalibrated "baseline" LPIPS variant.
    static LpipsCalibration uniform();
};

/// LPIPS distance on the VGG16 trunk: unit-normalised features, weighted squared differences,
/// spatially averaged and summed over the five blocks.
class Lpips {
public:
    Lpips(const FeatureWeights& weights, LpipsCalibration calibration);

    /// Inputs in [0, 1], [3, H, W] or [B, 3, H, W]; one distance per sample.
    torch::Tensor per_sample(const torch::Tensor& pred, const torch::Tensor& target) const;
    double operator()(const torch::Tensor& pred, const torch::Tensor& target) const;

    bool pretrained() const { return trunk_->pretrained() && calibration_.published; }

private:
    mutable Vgg16Trunk trunk_{nullptr};
    LpipsCalibration calibration_;
};

/// DISTS channel weights alpha (structure of means) and beta (correlation), 1475 each.
struct DistsCalibration {
    torch::Tensor alpha;
    torch::Tensor beta;
    std::string checksum;
    bool published = false;

    static DistsCalibration from_file(const std::filesystem::path& path);
    /// Equal weights for every channel.
    static DistsCalibration uniform();
};

/// DISTS on the L2-pooled VGG16 trunk, returned as a distance in [0, 1] (0 = identical).
class Dists {
public:
    Dists(const FeatureWeights& weights, DistsCalibration calibration);

    torch::Tensor per_sample(const torch::Tensor& pred, const torch::Tensor& target) const;
    double operator()(const torch::Tensor& pred, const torch::Tensor& target) const;

    bool pretrained() const { return trunk_->pretrained() && calibration_.published; }

private:
    mutable Vgg16Trunk trunk_{nullptr};
    DistsCalibration calibration_;
};

enum class Direction { higher_better, lower_better };

/// Scores of distinct items with the direction that makes a score better.
struct Ranking {
    std::vector<std::pair<std::string, double>> entries;
    Direction direction = Direction::higher_better;

    /// Rank per item (1 = best), averaging ranks over ties.
    std::map<std::string, double> ranks() const;
};

/// Tie-aware Spearman rank correlation. Throws ConfigError when the id sets differ.
double spearman(const Ranking& a, const Ranking& b);

/// Metric means over one evaluation set.
struct MetricReport {
    std::string model_id;
    std::string set_id = "validation";
    std::int64_t sample_count = 0;
    std::map<std::string, double> values;     ///< keyed by metric name
    std::map<std::string, std::string> notes;  ///< e.g. skipped metrics, regularised FID, seeded extractor

    /// Column order used in tables: DISTS, LPIPS, FID, PSNR, SSIM.
    static const std::vector<std::string>& metric_order();
    static Direction direction(const std::string& metric);

    std::string csv_header() const;
    std::string csv_row() const;
    std::string text_table() const;
};

}  // namespace stereorecon
