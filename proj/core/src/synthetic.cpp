#include "stereorecon/synthetic.hpp"

#include <cstdlib>
#include <random>

#include "stereorecon/error.hpp"
#include "stereorecon/image_io.hpp"
#include "stereorecon/random.hpp"

namespace stereorecon {
namespace {

namespace F = torch::nn::functional;

torch::Tensor random_grid(std::mt19937_64& rng, std::int64_t channels, std::int64_t rows, std::int64_t cols) {
    std::vector<float> values(static_cast<std::size_t>(channels * rows * cols));
    for (auto& v : values) v = static_cast<float>(uniform01(rng));
    return torch::tensor(values).reshape({1, channels, rows, cols});
}

// right[c] = left[c - d]; vacated columns are black.
torch::Tensor shift_black(const torch::Tensor& frame, std::int64_t d) {
    const auto w = frame.size(-1);
    auto out = torch::zeros_like(frame);
    if (d >= 0) {
        if (d < w) out.narrow(-1, d, w - d).copy_(frame.narrow(-1, 0, w - d));
    } else {
        const auto s = -d;
        if (s < w) out.narrow(-1, 0, w - s).copy_(frame.narrow(-1, s, w - s));
    }
    return out;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
    if (num_frames < 1) throw ConfigError("synthetic scene needs num_frames >= 1");
    if (height < 1 || width < 1) throw ConfigError("synthetic scene needs positive H and W");
    if (std::llabs(true_disparity) >= width) throw ConfigError("synthetic scene needs |true_disparity| < W");
}

void OccluderSceneSpec::validate() const {
    if (num_segments < 1 || segment_length < 1) throw ConfigError("occluder scene needs segments of >= 1 frame");
    if (height < 1 || width < 1) throw ConfigError("occluder scene needs positive H and W");
    if (occluder_width < 1 || occluder_width >= width) throw ConfigError("occluder width must lie in [1, W)");
    if (std::llabs(occluder_disparity) >= width || std::llabs(background_disparity) >= width)
        throw ConfigError("occluder scene disparities must be smaller than W");
}

torch::Tensor make_texture(std::int64_t height, std::int64_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto acc = torch::zeros({1, 3, height, width});
    double total = 0.0;
    double amplitude = 1.0;
    for (std::int64_t cell : {32, 16, 8, 4, 2}) {
        const auto rows = height / cell + 2;
        const auto cols = width / cell + 2;
        auto grid = random_grid(rng, 3, rows, cols);
        auto up = F::interpolate(grid, F::InterpolateFuncOptions()
                                           .size(std::vector<std::int64_t>{rows * cell, cols * cell})
                                           .mode(torch::kBilinear)
                                           .align_corners(true));
        acc += amplitude * up.narrow(2, 0, height).narrow(3, 0, width);
        total += amplitude;
        amplitude *= 0.6;
    }
    auto tex = (acc / total).squeeze(0);
    // Stretch contrast around mid-grey so structure survives 8-bit quantisation.
    tex = ((tex - tex.mean()) * 2.5 + 0.5).clamp(0.0, 1.0);
    return quantize_8bit(tex).contiguous();
}

InMemoryStereo generate_synthetic_stereo(const SyntheticSceneSpec& spec) {
    spec.validate();
    const auto span_x = std::llabs(spec.motion_x) * (spec.num_frames - 1);
    const auto span_y = std::llabs(spec.motion_y) * (spec.num_frames - 1);
    const auto canvas = make_texture(spec.height + span_y, spec.width + span_x, spec.texture_seed);

    InMemoryStereo scene;
    for (std::int64_t t = 0; t < spec.num_frames; ++t) {
        const auto ox = spec.motion_x >= 0 ? spec.motion_x * t : span_x + spec.motion_x * t;
        const auto oy = spec.motion_y >= 0 ? spec.motion_y * t : span_y + spec.motion_y * t;
        auto left = canvas.narrow(1, oy, spec.height).narrow(2, ox, spec.width).contiguous();
        scene.push_back(left, shift_black(left, spec.true_disparity));
    }
    return scene;
}

InMemoryStereo generate_occluder_stereo(const OccluderSceneSpec& spec) {
    spec.validate();
    const auto margin = std::llabs(spec.background_disparity);
    const auto w = spec.width;
    const auto ow = spec.occluder_width;
    const auto period = w + ow;

    InMemoryStereo scene;
    for (std::int64_t s = 0; s < spec.num_segments; ++s) {
        const auto seg_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(s));
        const auto background = make_texture(spec.height, w + 2 * margin, mix_seed(seg_seed, 0));
        const auto occluder = make_texture(spec.height, ow, mix_seed(seg_seed, 1));
        std::mt19937_64 rng(mix_seed(seg_seed, 2));
        const auto start = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(period)));

        auto left_bg = background.narrow(2, margin, w);
        auto right_bg = background.narrow(2, margin - spec.background_disparity, w);
        for (std::int64_t t = 0; t < spec.segment_length; ++t) {
            // Occluder's left edge in the left view; it wraps once it leaves the frame.
            const auto pos = (start + spec.occluder_speed * t) % period - ow;
            auto paint = [&](torch::Tensor base, std::int64_t edge) {
                auto out = base.clone();
                const auto lo = std::max<std::int64_t>(edge, 0);
                const auto hi = std::min<std::int64_t>(edge + ow, w);
                if (hi > lo) out.narrow(2, lo, hi - lo).copy_(occluder.narrow(2, lo - edge, hi - lo));
                return out;
            };
            scene.push_back(paint(left_bg, pos), paint(right_bg, pos + spec.occluder_disparity));
        }
    }
    return scene;
}

}  // namespace stereorecon
