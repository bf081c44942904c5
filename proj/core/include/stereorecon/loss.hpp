#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "stereorecon/features.hpp"
#include "stereorecon/frame.hpp"

namespace stereorecon {

enum class LossKind { mse, mae, perceptual };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

/// Mean squared error over every element. Throws ShapeError on mismatched shapes.
torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target);
/// Mean absolute error over every element.
torch::Tensor mae_loss(const torch::Tensor& pred, const torch::Tensor& target);

double mse_loss(const Frame& pred, const Frame& target);
double mae_loss(const Frame& pred, const Frame& target);

/// Sum over the first three VGG16 blocks (tapped after each max-pool) of the MAE between the
/// feature maps of prediction and target. Inputs are ImageNet-normalised, never resized.
class PerceptualLoss {
public:
    explicit PerceptualLoss(const FeatureWeights& weights);

    /// Scalar, averaged over the batch. Accepts [3, H, W] or [B, 3, H, W].
    torch::Tensor operator()(const torch::Tensor& pred, const torch::Tensor& target) const;

    /// One loss per sample, [B].
    torch::Tensor per_sample(const torch::Tensor& pred, const torch::Tensor& target) const;

    /// Per-sample loss against target features computed once with `target_features`.
    torch::Tensor per_sample(const torch::Tensor& pred, const std::vector<torch::Tensor>& target_feats) const;

    /// The three tapped feature maps of a batch.
    std::vector<torch::Tensor> target_features(const torch::Tensor& images) const;

    /// Moves the frozen extractor to another dtype (e.g. double for gradient checks).
    void to(torch::Dtype dtype);

    const Vgg16Trunk& extractor() const noexcept { return trunk_; }
    const std::string& checksum() const noexcept { return checksum_; }
    bool pretrained() const noexcept { return trunk_->pretrained(); }

private:
    mutable Vgg16Trunk trunk_{nullptr};
    std::string checksum_;
};

/// A training/fitting objective chosen at runtime.
class LossFunction {
public:
    static LossFunction mse();
    static LossFunction mae();
    static LossFunction perceptual(PerceptualLoss loss);
    /// `weights` is required only for the perceptual kind.
    static LossFunction make(LossKind kind, const std::optional<FeatureWeights>& weights);

    LossKind kind() const noexcept { return kind_; }
    std::string name() const { return to_string(kind_); }

    torch::Tensor operator()(const torch::Tensor& pred, const torch::Tensor& target) const;
    torch::Tensor per_sample(const torch::Tensor& pred, const torch::Tensor& target) const;

    const PerceptualLoss* perceptual_loss() const { return perceptual_ ? &*perceptual_ : nullptr; }

private:
    explicit LossFunction(LossKind kind) : kind_(kind) {}

    LossKind kind_;
    std::optional<PerceptualLoss> perceptual_;
};

}  // namespace stereorecon
