#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace stereorecon {

/// Named tensors loaded from a PyTorch zip-format state dict (`torch.save(state_dict)`).
using StateDict = std::map<std::string, torch::Tensor>;

/// Throws WeightsError when the file is missing, legacy-format or not a tensor dict.
StateDict load_state_dict_file(const std::filesystem::path& path);

/// Writes a state dict in the same format `torch.save` produces.
void save_state_dict_file(const std::filesystem::path& path, const StateDict& tensors);

/// Source of VGG16 convolution weights for the perceptual loss and the deep metrics.
///
/// Pretrained ImageNet weights come from a torchvision-style state dict (keys `features.N.weight`
/// and `features.N.bias`). `seeded` builds a deterministic He-initialised trunk for environments
/// without the published file; results computed with it are labelled as such.
struct FeatureWeights {
    StateDict tensors;
    std::string checksum;  ///< SHA-256 of the file, or "seeded:<seed>"
    std::string origin;    ///< file path or "seeded"
    bool pretrained = false;

    static FeatureWeights from_file(const std::filesystem::path& path);
    static FeatureWeights seeded(std::uint64_t seed);
};

enum class VggPooling { max, l2 };

/// ImageNet per-channel statistics used to normalise classifier inputs.
torch::Tensor imagenet_normalize(const torch::Tensor& rgb);

/// The convolutional part of VGG16, truncated after `blocks` (1..5) blocks, frozen and in eval mode.
/// Parameters are named like torchvision's `features` sequential so state dicts load directly.
class Vgg16TrunkImpl : public torch::nn::Module {
public:
    Vgg16TrunkImpl(const FeatureWeights& weights, std::int64_t blocks, VggPooling pooling);

    struct Outputs {
        std::vector<torch::Tensor> block;   ///< last ReLU of each block (relu1_2, relu2_2, relu3_3, ...)
        std::vector<torch::Tensor> pooled;  ///< same, after that block's pooling; the last is omitted below 2x2
    };

    /// Expects an already normalised [B, 3, H, W] tensor.
    Outputs forward(const torch::Tensor& x);

    std::int64_t blocks() const noexcept { return blocks_; }
    const std::string& checksum() const noexcept { return checksum_; }
    bool pretrained() const noexcept { return pretrained_; }

private:
    torch::Tensor pool(const torch::Tensor& x, std::int64_t block) const;

    std::int64_t blocks_;
    VggPooling pooling_;
    std::string checksum_;
    bool pretrained_;
    std::shared_ptr<torch::nn::Module> features_;
    std::vector<std::vector<torch::nn::Conv2d>> convs_;
    std::vector<torch::Tensor> l2_filters_;
};
TORCH_MODULE(Vgg16Trunk);

/// Output channels of VGG16 block `b` (0-based).
std::int64_t vgg16_block_channels(std::int64_t block);

}  // namespace stereorecon
