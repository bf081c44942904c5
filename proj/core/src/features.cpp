#include "stereorecon/features.hpp"

#include <fstream>
#include <iterator>

#include "stereorecon/checksum.hpp"
#include "stereorecon/error.hpp"

namespace fs = std::filesystem;

namespace stereorecon {
namespace {

namespace F = torch::nn::functional;

constexpr std::int64_t kBlockConvs[5] = {2, 2, 3, 3, 3};
constexpr std::int64_t kBlockChannels[5] = {64, 128, 256, 512, 512};

}  // namespace

std::int64_t vgg16_block_channels(std::int64_t block) { return kBlockChannels[block]; }

StateDict load_state_dict_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightsError("weights file not found: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // PyTorch zip archives start with a local file header.
    if (bytes.size() < 4 || bytes[0] != 'P' || bytes[1] != 'K')
        throw WeightsError(path.string() +
                           " is not a zip-format state dict; re-save it with tools/convert_weights.py");
    StateDict out;
    try {
        auto value = torch::pickle_load(bytes);
        if (!value.isGenericDict()) throw WeightsError(path.string() + " does not contain a dict");
        for (const auto& kv : value.toGenericDict()) {
            if (!kv.key().isString() || !kv.value().isTensor()) continue;
            out.emplace(kv.key().toStringRef(), kv.value().toTensor().to(torch::kFloat32).contiguous());
        }
    } catch (const c10::Error& e) {
        throw WeightsError("cannot read " + path.string() + ": " + e.what_without_backtrace());
    }
    if (out.empty()) throw WeightsError(path.string() + " holds no tensors");
    return out;
}

void save_state_dict_file(const fs::path& path, const StateDict& tensors) {
    c10::Dict<std::string, torch::Tensor> dict;
    for (const auto& [k, v] : tensors) dict.insert(k, v);
    auto bytes = torch::pickle_save(c10::IValue(dict));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw WeightsError("cannot write " + path.string());
}

FeatureWeights FeatureWeights::from_file(const fs::path& path) {
    FeatureWeights w;
    for (auto& [key, tensor] : load_state_dict_file(path)) {
        std::string k = key;
        if (k.rfind("module.", 0) == 0) k = k.substr(7);
        if (k.rfind("features.", 0) == 0) w.tensors.emplace(k, tensor);
    }
    if (w.tensors.empty()) throw WeightsError(path.string() + " has no 'features.*' tensors");
    w.checksum = sha256_file(path);
    w.origin = path.string();
    w.pretrained = true;
    return w;
}

FeatureWeights FeatureWeights::seeded(std::uint64_t seed) {
    FeatureWeights w;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    std::int64_t index = 0;
    std::int64_t in = 3;
    for (std::int64_t b = 0; b < 5; ++b) {
        for (std::int64_t c = 0; c < kBlockConvs[b]; ++c) {
            const auto out = kBlockChannels[b];
            // He-normal with fan_out, as torchvision initialises VGG.
            const double stddev = std::sqrt(2.0 / static_cast<double>(out * 9));
            auto weight = at::normal(0.0, stddev, {out, in, 3, 3}, gen);
            w.tensors.emplace("features." + std::to_string(index) + ".weight", weight);
            w.tensors.emplace("features." + std::to_string(index) + ".bias", torch::zeros({out}));
            in = out;
            index += 2;  // conv, relu
        }
        index += 1;  // pool
    }
    w.checksum = "seeded:" + std::to_string(seed);
    w.origin = "seeded";
    w.pretrained = false;
    return w;
}

torch::Tensor imagenet_normalize(const torch::Tensor& rgb) {
    auto opts = torch::TensorOptions().dtype(rgb.scalar_type()).device(rgb.device());
    auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    auto stddev = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    return (rgb - mean) / stddev;
}

Vgg16TrunkImpl::Vgg16TrunkImpl(const FeatureWeights& weights, std::int64_t blocks, VggPooling pooling)
    : blocks_(blocks), pooling_(pooling), checksum_(weights.checksum), pretrained_(weights.pretrained) {
    if (blocks < 1 || blocks > 5) throw ConfigError("VGG16 trunk supports 1..5 blocks");
    features_ = register_module("features", std::make_shared<torch::nn::Module>());
    std::int64_t index = 0;
    std::int64_t in = 3;
    torch::NoGradGuard no_grad;
    for (std::int64_t b = 0; b < blocks; ++b) {
        convs_.emplace_back();
        for (std::int64_t c = 0; c < kBlockConvs[b]; ++c) {
            const auto out = kBlockChannels[b];
            auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
            const auto name = std::to_string(index);
            features_->register_module(name, conv);
            const auto wkey = "features." + name + ".weight";
            const auto bkey = "features." + name + ".bias";
            auto wit = weights.tensors.find(wkey);
            auto bit = weights.tensors.find(bkey);
            if (wit == weights.tensors.end() || bit == weights.tensors.end())
                throw WeightsError("VGG16 weights lack " + wkey + " (" + weights.origin + ")");
            if (!wit->second.sizes().equals(conv->weight.sizes()) || !bit->second.sizes().equals(conv->bias.sizes()))
                throw WeightsError("VGG16 weights have the wrong shape for " + wkey);
            conv->weight.copy_(wit->second);
            conv->bias.copy_(bit->second);
            convs_.back().push_back(conv);
            in = out;
            index += 2;
        }
        index += 1;
        if (pooling_ == VggPooling::l2) {
            // Separable Hann window [0.5, 1, 0.5], normalised.
            auto a = torch::tensor({0.5F, 1.0F, 0.5F});
            auto g = torch::outer(a, a);
            g = g / g.sum();
            l2_filters_.push_back(
                register_buffer("l2_filter" + std::to_string(b), g.view({1, 1, 3, 3}).repeat({kBlockChannels[b], 1, 1, 1})));
        }
    }
    for (auto& p : parameters()) p.set_requires_grad(false);
    eval();
}

torch::Tensor Vgg16TrunkImpl::pool(const torch::Tensor& x, std::int64_t block) const {
    if (pooling_ == VggPooling::max) return F::max_pool2d(x, F::MaxPool2dFuncOptions(2).stride(2));
    const auto& filter = l2_filters_[static_cast<std::size_t>(block)];
    auto out = F::conv2d(x * x, filter.to(x.scalar_type()),
                         F::Conv2dFuncOptions().stride(2).padding(1).groups(x.size(1)));
    return torch::sqrt(out + 1e-12);
}

Vgg16TrunkImpl::Outputs Vgg16TrunkImpl::forward(const torch::Tensor& x) {
    Outputs outputs;
    torch::Tensor h = x;
    for (std::int64_t b = 0; b < blocks_; ++b) {
        for (auto& conv : convs_[static_cast<std::size_t>(b)]) h = torch::relu(conv(h));
        outputs.block.push_back(h);
        if (b + 1 == blocks_ && std::min(h.size(-2), h.size(-1)) < 2) break;
        h = pool(h, b);
        outputs.pooled.push_back(h);
    }
    return outputs;
}

}  // namespace stereorecon
