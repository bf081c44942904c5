#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "stereorecon/dataset.hpp"

namespace stereorecon {

/// A textured plane at constant disparity, optionally panning. Oracle data for baselines and export.
struct SyntheticSceneSpec {
    std::int64_t num_frames = 1;
    std::int64_t height = 192;
    std::int64_t width = 384;
    std::int64_t true_disparity = 0;
    std::uint64_t texture_seed = 0;
    std::int64_t motion_x = 0;  ///< px per frame
    std::int64_t motion_y = 0;  ///< px per frame

    void validate() const;
};

/// Left frames are crops of one texture translated by `motion` per frame. The right frame is the
/// left frame shifted horizontally by `true_disparity` (right[c] = left[c - d]) with vacated
/// columns black. Pixel values are 8-bit quantised so a PNG round trip is exact.
InMemoryStereo generate_synthetic_stereo(const SyntheticSceneSpec& spec);

/// Segments of a static textured background crossed by a textured occluder bar. The occluder sits
/// at a different disparity than the background, so the right view exposes background columns that
/// the current left frame hides but earlier left frames show. Each segment draws fresh textures.
struct OccluderSceneSpec {
    std::int64_t num_segments = 10;
    std::int64_t segment_length = 10;
    std::int64_t height = 32;
    std::int64_t width = 64;
    std::int64_t occluder_width = 12;
    std::int64_t occluder_speed = 8;        ///< px per frame, rightwards
    std::int64_t occluder_disparity = -8;   ///< px
    std::int64_t background_disparity = 0;  ///< px
    std::uint64_t seed = 0;

    void validate() const;
};

InMemoryStereo generate_occluder_stereo(const OccluderSceneSpec& spec);

/// Smooth multi-octave colour noise of shape [3, H, W], 8-bit quantised.
torch::Tensor make_texture(std::int64_t height, std::int64_t width, std::uint64_t seed);

}  // namespace stereorecon
