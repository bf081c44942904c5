#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "stereorecon/dataset.hpp"
#include "stereorecon/frame.hpp"
#include "stereorecon/loss.hpp"

namespace stereorecon {

/// What fills the columns a shift vacates.
enum class FillPolicy {
    zeros,          ///< black strip
    copy_original,  ///< the input's own pixels at those columns (duplicated strip)
};

std::string to_string(FillPolicy fill);
FillPolicy parse_fill_policy(const std::string& text);

/// Horizontal translation of the last (width) axis: out[..., c] = in[..., c - delta].
/// Works on any tensor whose last axis is W. Throws ConfigError when |delta| > W.
torch::Tensor shift_frame(const torch::Tensor& image, std::int64_t delta, FillPolicy fill);
Frame shift_frame(const Frame& frame, std::int64_t delta, FillPolicy fill);

struct ShiftFitOptions {
    /// Inclusive search range; defaults to [-W, W] when unset.
    std::optional<std::int64_t> min_delta;
    std::optional<std::int64_t> max_delta;
    /// Fit on every `stride`-th sample; the reported loss always covers the full set.
    std::int64_t stride = 1;
    std::int64_t batch_size = 32;
};

/// Result of the exhaustive integer search.
struct ShiftBaseline {
    std::int64_t delta = 0;
    FillPolicy fill = FillPolicy::copy_original;
    LossKind loss = LossKind::mse;
    double loss_value = 0.0;  ///< mean loss at `delta` over the full set
    std::vector<std::pair<std::int64_t, double>> loss_curve;  ///< mean loss per candidate on the fitting subset

    /// True when the optimum is a full-width shift, i.e. an output with no image content.
    bool degenerate(std::int64_t width) const { return delta == width || delta == -width; }
};

nlohmann::json to_json(const ShiftBaseline& fit);

/// Mean per-sample loss of the shift baseline over the given frames.
double shift_loss(const FrameSource& source, std::span<const std::int64_t> frame_indices, std::int64_t delta,
                  FillPolicy fill, const LossFunction& loss, std::int64_t batch_size = 32);

/// Exhaustive search over integer disparities minimising the mean loss between the shifted current
/// left frame and the right frame. Ties prefer the smallest |delta|, then the negative one.
/// Throws DataError when `frame_indices` is empty.
ShiftBaseline fit_shift(const FrameSource& source, std::span<const std::int64_t> frame_indices,
                        const LossFunction& loss, FillPolicy fill, const ShiftFitOptions& options = {});

}  // namespace stereorecon
