#include "stereorecon/model.hpp"

#include <sstream>

#include "stereorecon/error.hpp"

namespace stereorecon {

namespace F = torch::nn::functional;

std::string to_string(TemporalMode mode) {
    switch (mode) {
        case TemporalMode::single: return "single";
        case TemporalMode::stack: return "stack";
        case TemporalMode::spatio_temporal: return "spatio_temporal";
    }
    return "?";
}

std::string to_string(TemporalModule module) {
    switch (module) {
        case TemporalModule::conv3d: return "conv3d";
        case TemporalModule::average: return "average";
        case TemporalModule::maximum: return "maximum";
    }
    return "?";
}

std::string to_string(Upsampling up) {
    return up == Upsampling::transposed_conv ? "transposed_conv" : "bilinear";
}

TemporalMode parse_temporal_mode(const std::string& text) {
    if (text == "single") return TemporalMode::single;
    if (text == "stack") return TemporalMode::stack;
    if (text == "spatio_temporal") return TemporalMode::spatio_temporal;
    throw ConfigError("unknown temporal_mode '" + text + "'");
}

TemporalModule parse_temporal_module(const std::string& text) {
    if (text == "conv3d") return TemporalModule::conv3d;
    if (text == "average" || text == "avg") return TemporalModule::average;
    if (text == "maximum" || text == "max") return TemporalModule::maximum;
    throw ConfigError("unknown temporal_module '" + text + "'");
}

Upsampling parse_upsampling(const std::string& text) {
    if (text == "transposed_conv" || text == "tc") return Upsampling::transposed_conv;
    if (text == "bilinear" || text == "bi") return Upsampling::bilinear;
    throw ConfigError("unknown upsampling '" + text + "'");
}

void ModelConfig::validate() const {
    if (frames < 1) throw ConfigError("frames must be >= 1");
    if (temporal_mode == TemporalMode::single && frames != 1)
        throw ConfigError("temporal_mode=single requires frames=1 (got frames=" + std::to_string(frames) + ")");
    if (depth < 2 || depth > 8) throw ConfigError("depth must lie in [2, 8] (got " + std::to_string(depth) + ")");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"frames", c.frames},
         {"depth", c.depth},
         {"temporal_mode", to_string(c.temporal_mode)},
         {"temporal_module", to_string(c.temporal_module)},
         {"upsampling", to_string(c.upsampling)},
         {"base_channels", c.base_channels},
         {"sigmoid_output", c.sigmoid_output},
         {"extra_skip", c.extra_skip}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.frames = j.value("frames", d.frames);
    c.depth = j.value("depth", d.depth);
    c.temporal_mode = parse_temporal_mode(j.value("temporal_mode", to_string(d.temporal_mode)));
    c.temporal_module = parse_temporal_module(j.value("temporal_module", to_string(d.temporal_module)));
    c.upsampling = parse_upsampling(j.value("upsampling", to_string(d.upsampling)));
    c.base_channels = j.value("base_channels", d.base_channels);
    c.sigmoid_output = j.value("sigmoid_output", d.sigmoid_output);
    c.extra_skip = j.value("extra_skip", d.extra_skip);
}

std::vector<std::string> config_differences(const ModelConfig& expected, const ModelConfig& actual) {
    nlohmann::json a = expected;
    nlohmann::json b = actual;
    std::vector<std::string> diffs;
    for (const auto& [key, value] : a.items()) {
        if (b[key] != value) diffs.push_back(key + ": " + value.dump() + " != " + b[key].dump());
    }
    return diffs;
}

DoubleConvImpl::DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels) {
    conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
    conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
}

torch::Tensor DoubleConvImpl::forward(const torch::Tensor& x) {
    return torch::relu(conv2_(torch::relu(conv1_(x))));
}

UpBlockImpl::UpBlockImpl(std::int64_t in_channels, std::int64_t out_channels, Upsampling mode) : mode_(mode) {
    if (mode_ == Upsampling::transposed_conv) {
        up_ = register_module("up", torch::nn::ConvTranspose2d(
                                        torch::nn::ConvTranspose2dOptions(in_channels, out_channels, 2).stride(2)));
    } else {
        reduce_ = register_module("reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
    }
    conv_ = register_module("conv", DoubleConv(2 * out_channels, out_channels));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
    torch::Tensor up;
    if (mode_ == Upsampling::transposed_conv) {
        up = up_(x);
    } else {
        up = reduce_(F::interpolate(
            x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kBilinear).align_corners(false)));
    }
    // Pad (never crop) the upsampled map to the skip's spatial size.
    const auto dh = skip.size(2) - up.size(2);
    const auto dw = skip.size(3) - up.size(3);
    if (dh != 0 || dw != 0) {
        if (dh < 0 || dw < 0) throw ShapeError("upsampled map larger than its skip connection");
        up = F::pad(up, F::PadFuncOptions({dw / 2, dw - dw / 2, dh / 2, dh - dh / 2}));
    }
    return conv_(torch::cat({skip, up}, 1));
}

TemporalFusionImpl::TemporalFusionImpl(TemporalModule kind, std::int64_t channels, std::int64_t frames)
    : kind_(kind), channels_(channels), frames_(frames) {
    if (kind_ == TemporalModule::conv3d) {
        conv_ = register_module(
            "conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(channels, channels, {frames, 3, 3}).padding({0, 1, 1})));
    }
}

torch::Tensor TemporalFusionImpl::forward(const torch::Tensor& maps) {
    if (maps.dim() != 5 || maps.size(1) != frames_ || maps.size(2) != channels_) {
        std::ostringstream msg;
        msg << "temporal module expects [B, " << frames_ << ", " << channels_ << ", h, w], got " << maps.sizes();
        throw ShapeError(msg.str());
    }
    switch (kind_) {
        case TemporalModule::average: return maps.mean(1);
        case TemporalModule::maximum: return std::get<0>(maps.max(1));
        case TemporalModule::conv3d: return conv_(maps.transpose(1, 2)).squeeze(2);
    }
    return {};
}

void TemporalFusionImpl::set_identity() {
    if (kind_ != TemporalModule::conv3d) return;
    torch::NoGradGuard no_grad;
    conv_->weight.zero_();
    conv_->bias.zero_();
    for (std::int64_t c = 0; c < channels_; ++c) conv_->weight[c][c][frames_ - 1][1][1] = 1.0;
}

torch::Tensor apply_temporal_module(TemporalFusion& module, std::span<const torch::Tensor> maps) {
    if (maps.empty()) throw ShapeError("temporal module needs at least one map");
    for (const auto& m : maps) {
        if (!m.sizes().equals(maps.front().sizes())) throw ShapeError("temporal module inputs differ in shape");
    }
    const bool batched = maps.front().dim() == 4;
    if (!batched && maps.front().dim() != 3) throw ShapeError("temporal module maps must be [C,h,w] or [B,C,h,w]");
    std::vector<torch::Tensor> parts(maps.begin(), maps.end());
    auto stacked = torch::stack(parts, batched ? 1 : 0);
    if (!batched) stacked = stacked.unsqueeze(0);
    auto fused = module(stacked);
    return batched ? fused : fused.squeeze(0);
}

torch::Tensor stack_channels(const torch::Tensor& window) {
    if (window.dim() == 4) return window.reshape({window.size(0) * window.size(1), window.size(2), window.size(3)});
    if (window.dim() == 5)
        return window.reshape({window.size(0), window.size(1) * window.size(2), window.size(3), window.size(4)});
    throw ShapeError("stack_channels expects [K, 3, H, W] or [B, K, 3, H, W]");
}

torch::Tensor unstack_channels(const torch::Tensor& stacked, std::int64_t frames) {
    if (stacked.dim() == 3) return stacked.reshape({frames, stacked.size(0) / frames, stacked.size(1), stacked.size(2)});
    if (stacked.dim() == 4)
        return stacked.reshape(
            {stacked.size(0), frames, stacked.size(1) / frames, stacked.size(2), stacked.size(3)});
    throw ShapeError("unstack_channels expects [3K, H, W] or [B, 3K, H, W]");
}

StereoUNetImpl::StereoUNetImpl(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto in_channels = config_.temporal_mode == TemporalMode::stack ? 3 * config_.frames : 3;

    encoder_ = register_module("encoder", torch::nn::ModuleList());
    for (std::int64_t level = 0; level < config_.depth; ++level) {
        const auto in = level == 0 ? in_channels : config_.channels_at(level - 1);
        encoder_->push_back(DoubleConv(in, config_.channels_at(level)));
    }
    if (config_.temporal_mode == TemporalMode::spatio_temporal) {
        fusion_ = register_module("fusion", torch::nn::ModuleList());
        for (std::int64_t level = 0; level < config_.depth; ++level)
            fusion_->push_back(TemporalFusion(config_.temporal_module, config_.channels_at(level), config_.frames));
    }
    decoder_ = register_module("decoder", torch::nn::ModuleList());
    for (std::int64_t level = 0; level + 1 < config_.depth; ++level)
        decoder_->push_back(UpBlock(config_.channels_at(level + 1), config_.channels_at(level), config_.upsampling));
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.base_channels, 3, 1)));
}

torch::Tensor StereoUNetImpl::forward(const torch::Tensor& window) {
    const auto K = config_.frames;
    if (window.dim() != 5 || window.size(1) != K || window.size(2) != 3) {
        std::ostringstream msg;
        msg << "network expects input [B, " << K << ", 3, H, W], got " << window.sizes();
        throw ShapeError(msg.str());
    }
    const auto B = window.size(0);
    const auto H = window.size(3);
    const auto W = window.size(4);

    torch::Tensor x;
    switch (config_.temporal_mode) {
        case TemporalMode::single: x = window.select(1, K - 1); break;
        case TemporalMode::stack: x = stack_channels(window); break;
        case TemporalMode::spatio_temporal: x = window.reshape({B * K, 3, H, W}); break;
    }

    const auto m = config_.spatial_multiple();
    const auto pad_h = (m - H % m) % m;
    const auto pad_w = (m - W % m) % m;
    if (pad_h > 0 || pad_w > 0) {
        const bool reflect = pad_h < H && pad_w < W;
        auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
        if (reflect)
            options.mode(torch::kReflect);
        else
            options.mode(torch::kReplicate);
        x = F::pad(x, options);
    }

    std::vector<torch::Tensor> features;
    features.reserve(static_cast<std::size_t>(config_.depth));
    torch::Tensor h = x;
    for (std::int64_t level = 0; level < config_.depth; ++level) {
        if (level > 0) h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
        h = encoder_[level]->as<DoubleConv>()->forward(h);
        features.push_back(h);
    }
    if (config_.temporal_mode == TemporalMode::spatio_temporal) {
        for (std::int64_t level = 0; level < config_.depth; ++level) {
            auto& f = features[static_cast<std::size_t>(level)];
            f = fusion_[level]->as<TemporalFusion>()->forward(f.view({B, K, f.size(1), f.size(2), f.size(3)}));
        }
    }
    if (ablated_skip_) {
        const auto level = *ablated_skip_;
        if (level < 0 || level + 1 >= config_.depth) throw ConfigError("no skip connection at level " + std::to_string(level));
        features[static_cast<std::size_t>(level)] = torch::zeros_like(features[static_cast<std::size_t>(level)]);
    }

    h = features.back();
    for (auto level = config_.depth - 2; level >= 0; --level)
        h = decoder_[level]->as<UpBlock>()->forward(h, features[static_cast<std::size_t>(level)]);

    auto out = head_(h);
    if (pad_h > 0 || pad_w > 0) out = out.narrow(2, 0, H).narrow(3, 0, W);
    if (config_.extra_skip) out = out + window.select(1, K - 1);
    if (config_.sigmoid_output) out = torch::sigmoid(out);
    return out;
}

void StereoUNetImpl::set_identity_temporal() {
    if (!fusion_) return;
    for (const auto& module : *fusion_) module->as<TemporalFusion>()->set_identity();
}

StereoUNet build_model(const ModelConfig& config, std::uint64_t init_seed) {
    config.validate();
    torch::manual_seed(init_seed);
    return StereoUNet(config);
}

std::int64_t parameter_count(const torch::nn::Module& module) {
    std::int64_t total = 0;
    for (const auto& p : module.parameters()) total += p.numel();
    return total;
}

Frame Prediction::frame() const { return Frame(right_view.detach().clamp(0.0, 1.0), source_index); }

Prediction forward(StereoUNet& network, const FrameWindow& window, const std::string& model_id) {
    if (window.length() != network->config().frames) {
        throw ShapeError("window has K=" + std::to_string(window.length()) + " but the network expects K=" +
                         std::to_string(network->config().frames));
    }
    torch::NoGradGuard no_grad;
    const bool was_training = network->is_training();
    network->eval();
    auto out = network->forward(window.to_tensor().unsqueeze(0)).squeeze(0);
    network->train(was_training);
    return {out, model_id, window.current().index()};
}

}  // namespace stereorecon
