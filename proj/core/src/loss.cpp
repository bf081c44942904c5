#include "stereorecon/loss.hpp"

#include <sstream>

#include "stereorecon/error.hpp"

namespace stereorecon {
namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes())) {
        std::ostringstream msg;
        msg << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
        throw ShapeError(msg.str());
    }
}

torch::Tensor as_batch(const torch::Tensor& x) {
    if (x.dim() == 3) return x.unsqueeze(0);
    if (x.dim() == 4) return x;
    throw ShapeError("expected [3, H, W] or [B, 3, H, W] images");
}

}  // namespace

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::mse: return "mse";
        case LossKind::mae: return "mae";
        case LossKind::perceptual: return "perceptual";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& text) {
    if (text == "mse") return LossKind::mse;
    if (text == "mae") return LossKind::mae;
    if (text == "perceptual") return LossKind::perceptual;
    throw ConfigError("unknown loss '" + text + "'");
}

torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "mse_loss");
    return (pred - target).square().mean();
}

torch::Tensor mae_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "mae_loss");
    return (pred - target).abs().mean();
}

double mse_loss(const Frame& pred, const Frame& target) {
    return stereorecon::mse_loss(pred.pixels().to(torch::kFloat64), target.pixels().to(torch::kFloat64)).item<double>();
}

double mae_loss(const Frame& pred, const Frame& target) {
    return stereorecon::mae_loss(pred.pixels().to(torch::kFloat64), target.pixels().to(torch::kFloat64)).item<double>();
}

PerceptualLoss::PerceptualLoss(const FeatureWeights& weights)
    : trunk_(Vgg16Trunk(weights, 3, VggPooling::max)), checksum_(weights.checksum) {}

std::vector<torch::Tensor> PerceptualLoss::target_features(const torch::Tensor& images) const {
    return trunk_->forward(imagenet_normalize(as_batch(images))).pooled;
}

torch::Tensor PerceptualLoss::per_sample(const torch::Tensor& pred, const std::vector<torch::Tensor>& target_feats) const {
    auto pred_feats = target_features(pred);
    torch::Tensor total;
    for (std::size_t i = 0; i < pred_feats.size(); ++i) {
        auto mae = (pred_feats[i] - target_feats[i]).abs().flatten(1).mean(1);
        total = total.defined() ? total + mae : mae;
    }
    return total;
}

torch::Tensor PerceptualLoss::per_sample(const torch::Tensor& pred, const torch::Tensor& target) const {
    check_same_shape(pred, target, "perceptual_loss");
    return per_sample(pred, target_features(target));
}

torch::Tensor PerceptualLoss::operator()(const torch::Tensor& pred, const torch::Tensor& target) const {
    return per_sample(pred, target).mean();
}

void PerceptualLoss::to(torch::Dtype dtype) { trunk_->to(dtype); }

LossFunction LossFunction::mse() { return LossFunction(LossKind::mse); }
LossFunction LossFunction::mae() { return LossFunction(LossKind::mae); }

LossFunction LossFunction::perceptual(PerceptualLoss loss) {
    LossFunction f(LossKind::perceptual);
    f.perceptual_.emplace(std::move(loss));
    return f;
}

LossFunction LossFunction::make(LossKind kind, const std::optional<FeatureWeights>& weights) {
    switch (kind) {
        case LossKind::mse: return mse();
        case LossKind::mae: return mae();
        case LossKind::perceptual:
            if (!weights) throw WeightsError("perceptual loss requires VGG16 feature weights");
            return perceptual(PerceptualLoss(*weights));
    }
    throw ConfigError("unknown loss kind");
}

torch::Tensor LossFunction::operator()(const torch::Tensor& pred, const torch::Tensor& target) const {
    switch (kind_) {
        case LossKind::mse: return stereorecon::mse_loss(pred, target);
        case LossKind::mae: return stereorecon::mae_loss(pred, target);
        case LossKind::perceptual: return (*perceptual_)(pred, target);
    }
    return {};
}

torch::Tensor LossFunction::per_sample(const torch::Tensor& pred, const torch::Tensor& target) const {
    check_same_shape(pred, target, "loss");
    switch (kind_) {
        case LossKind::mse: return (as_batch(pred) - as_batch(target)).square().flatten(1).mean(1);
        case LossKind::mae: return (as_batch(pred) - as_batch(target)).abs().flatten(1).mean(1);
        case LossKind::perceptual: return perceptual_->per_sample(pred, target);
    }
    return {};
}

}  // namespace stereorecon
