#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "stereorecon/frame.hpp"

namespace stereorecon {

/// How the K input frames reach the network.
enum class TemporalMode {
    single,           ///< current frame only, K = 1
    stack,            ///< K frames concatenated along channels
    spatio_temporal,  ///< shared encoder per frame, fused per scale
};

/// Per-scale fusion operator of the spatio-temporal network.
enum class TemporalModule { conv3d, average, maximum };

enum class Upsampling { transposed_conv, bilinear };

std::string to_string(TemporalMode mode);
std::string to_string(TemporalModule module);
std::string to_string(Upsampling up);
TemporalMode parse_temporal_mode(const std::string& text);
TemporalModule parse_temporal_module(const std::string& text);
Upsampling parse_upsampling(const std::string& text);

struct ModelConfig {
    std::int64_t frames = 1;  ///< K
    std::int64_t depth = 5;   ///< encoder levels; depth - 1 poolings
    TemporalMode temporal_mode = TemporalMode::single;
    TemporalModule temporal_module = TemporalModule::conv3d;
    Upsampling upsampling = Upsampling::transposed_conv;
    std::int64_t base_channels = 64;  ///< doubles per level
    bool sigmoid_output = false;
    bool extra_skip = false;  ///< adds the current left frame to the output

    /// Throws ConfigError naming the conflicting fields.
    void validate() const;

    std::int64_t channels_at(std::int64_t level) const { return base_channels << level; }

    /// Inputs are padded to a multiple of this in H and W.
    std::int64_t spatial_multiple() const { return std::int64_t{1} << (depth - 1); }

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Human-readable list of fields that differ, e.g. "frames: 5 != 1". Empty when equal.
std::vector<std::string> config_differences(const ModelConfig& expected, const ModelConfig& actual);

/// Two 3x3 convolutions with ReLU, zero-padded so spatial size is kept. No normalisation.
class DoubleConvImpl : public torch::nn::Module {
public:
    DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1_{nullptr};
    torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Upsamples by two, pads to the skip tensor's size, concatenates and applies a DoubleConv.
class UpBlockImpl : public torch::nn::Module {
public:
    UpBlockImpl(std::int64_t in_channels, std::int64_t out_channels, Upsampling mode);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

private:
    Upsampling mode_;
    torch::nn::ConvTranspose2d up_{nullptr};
    torch::nn::Conv2d reduce_{nullptr};
    DoubleConv conv_{nullptr};
};
TORCH_MODULE(UpBlock);

/// Collapses K per-frame feature maps [B, K, C, h, w] into one map [B, C, h, w].
/// The conv3d kind is a single Conv3d with a K x 3 x 3 kernel, no activation.
class TemporalFusionImpl : public torch::nn::Module {
public:
    TemporalFusionImpl(TemporalModule kind, std::int64_t channels, std::int64_t frames);
    torch::Tensor forward(const torch::Tensor& maps);

    /// conv3d only: makes the module pass the most recent frame's map through unchanged.
    void set_identity();

    TemporalModule kind() const noexcept { return kind_; }

private:
    TemporalModule kind_;
    std::int64_t channels_;
    std::int64_t frames_;
    torch::nn::Conv3d conv_{nullptr};
};
TORCH_MODULE(TemporalFusion);

/// Fuses a list of equally shaped [C, h, w] or [B, C, h, w] maps. Throws ShapeError on mismatch.
torch::Tensor apply_temporal_module(TemporalFusion& module, std::span<const torch::Tensor> maps);

/// [K, 3, H, W] -> [3K, H, W] (or batched [B, K, 3, H, W] -> [B, 3K, H, W]); oldest frame's channels first.
torch::Tensor stack_channels(const torch::Tensor& window);

/// Inverse of stack_channels.
torch::Tensor unstack_channels(const torch::Tensor& stacked, std::int64_t frames);

/// U-Net with padding-based skip concatenation and configurable temporal input handling.
class StereoUNetImpl : public torch::nn::Module {
public:
    explicit StereoUNetImpl(ModelConfig config);

    /// [B, K, 3, H, W] -> [B, 3, H, W]. Throws ShapeError when K or channel count is wrong.
    torch::Tensor forward(const torch::Tensor& window);

    /// Zeroes the skip connection at `level` (0 = finest) on subsequent forwards; nullopt restores it.
    void ablate_skip(std::optional<std::int64_t> level) { ablated_skip_ = level; }

    /// Sets every conv3d temporal module to pass the current frame through.
    void set_identity_temporal();

    const ModelConfig& config() const noexcept { return config_; }

private:
    ModelConfig config_;
    std::optional<std::int64_t> ablated_skip_;
    torch::nn::ModuleList encoder_{nullptr};
    torch::nn::ModuleList fusion_{nullptr};
    torch::nn::ModuleList decoder_{nullptr};
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(StereoUNet);

/// Builds a network with parameters initialised from `init_seed`. Reseeds torch's global generator.
StereoUNet build_model(const ModelConfig& config, std::uint64_t init_seed = 0);

std::int64_t parameter_count(const torch::nn::Module& module);

/// A predicted right view. Values may leave [0, 1] unless the model ends in a sigmoid.
struct Prediction {
    torch::Tensor right_view;  ///< [3, H, W]
    std::string model_id;
    std::int64_t source_index = 0;

    /// Clamped to [0, 1] for export.
    Frame frame() const;
};

/// Inference on one window, without gradients and in eval mode.
Prediction forward(StereoUNet& network, const FrameWindow& window, const std::string& model_id = "model");

}  // namespace stereorecon
