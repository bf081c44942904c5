#include "stereorecon/baseline.hpp"

#include <cstdlib>
#include <limits>

#include "stereorecon/error.hpp"

namespace stereorecon {

std::string to_string(FillPolicy fill) { return fill == FillPolicy::zeros ? "zeros" : "copy_original"; }

FillPolicy parse_fill_policy(const std::string& text) {
    if (text == "zeros") return FillPolicy::zeros;
    if (text == "copy_original" || text == "copy") return FillPolicy::copy_original;
    throw ConfigError("unknown fill policy '" + text + "'");
}

torch::Tensor shift_frame(const torch::Tensor& image, std::int64_t delta, FillPolicy fill) {
    const auto w = image.size(-1);
    if (std::llabs(delta) > w)
        throw ConfigError("shift |delta|=" + std::to_string(std::llabs(delta)) + " exceeds width " + std::to_string(w));
    auto out = fill == FillPolicy::zeros ? torch::zeros_like(image) : image.clone();
    const auto kept = w - std::llabs(delta);
    if (kept > 0) {
        if (delta >= 0)
            out.narrow(-1, delta, kept).copy_(image.narrow(-1, 0, kept));
        else
            out.narrow(-1, 0, kept).copy_(image.narrow(-1, -delta, kept));
    }
    return out;
}

Frame shift_frame(const Frame& frame, std::int64_t delta, FillPolicy fill) {
    return Frame(shift_frame(frame.pixels(), delta, fill), frame.index());
}

nlohmann::json to_json(const ShiftBaseline& fit) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [d, v] : fit.loss_curve) curve.push_back({d, v});
    return {{"delta", fit.delta},
            {"fill", to_string(fit.fill)},
            {"loss_name", to_string(fit.loss)},
            {"loss_value", fit.loss_value},
            {"loss_curve", curve}};
}

namespace {

// Accumulates per-candidate loss sums over batches so each frame is decoded once.
std::vector<double> candidate_losses(const FrameSource& source, std::span<const std::int64_t> indices,
                                     std::span<const std::int64_t> deltas, FillPolicy fill,
                                     const LossFunction& loss, std::int64_t batch_size) {
    torch::NoGradGuard no_grad;
    std::vector<double> sums(deltas.size(), 0.0);
    const auto n = static_cast<std::int64_t>(indices.size());
    for (std::int64_t begin = 0; begin < n; begin += batch_size) {
        const auto end = std::min(n, begin + batch_size);
        std::vector<torch::Tensor> lefts;
        std::vector<torch::Tensor> rights;
        for (auto i = begin; i < end; ++i) {
            lefts.push_back(source.left(indices[static_cast<std::size_t>(i)]).pixels());
            rights.push_back(source.right(indices[static_cast<std::size_t>(i)]).pixels());
        }
        auto left = torch::stack(lefts);
        auto right = torch::stack(rights);
        std::vector<torch::Tensor> target_feats;
        if (const auto* p = loss.perceptual_loss()) target_feats = p->target_features(right);
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            auto shifted = shift_frame(left, deltas[k], fill);
            auto per = target_feats.empty() ? loss.per_sample(shifted, right)
                                            : loss.perceptual_loss()->per_sample(shifted, target_feats);
            sums[k] += per.to(torch::kFloat64).sum().item<double>();
        }
    }
    for (auto& s : sums) s /= static_cast<double>(n);
    return sums;
}

}  // namespace

double shift_loss(const FrameSource& source, std::span<const std::int64_t> frame_indices, std::int64_t delta,
                  FillPolicy fill, const LossFunction& loss, std::int64_t batch_size) {
    if (frame_indices.empty()) throw DataError("shift loss needs at least one frame");
    const std::int64_t d[] = {delta};
    return candidate_losses(source, frame_indices, d, fill, loss, batch_size).front();
}

ShiftBaseline fit_shift(const FrameSource& source, std::span<const std::int64_t> frame_indices,
                        const LossFunction& loss, FillPolicy fill, const ShiftFitOptions& options) {
    if (frame_indices.empty()) throw DataError("cannot fit a shift baseline on an empty validation set");
    if (options.stride < 1 || options.batch_size < 1) throw ConfigError("stride and batch_size must be >= 1");
    const auto w = source.width();
    const auto lo = options.min_delta.value_or(-w);
    const auto hi = options.max_delta.value_or(w);
    if (lo > hi || std::llabs(lo) > w || std::llabs(hi) > w)
        throw ConfigError("shift search range must lie within [-W, W]");

    std::vector<std::int64_t> subset;
    for (std::size_t i = 0; i < frame_indices.size(); i += static_cast<std::size_t>(options.stride))
        subset.push_back(frame_indices[i]);

    std::vector<std::int64_t> deltas;
    for (auto d = lo; d <= hi; ++d) deltas.push_back(d);
    const auto losses = candidate_losses(source, subset, deltas, fill, loss, options.batch_size);

    ShiftBaseline fit;
    fit.fill = fill;
    fit.loss = loss.kind();
    std::size_t best = 0;
    auto better = [&](std::size_t a, std::size_t b) {
        if (losses[a] != losses[b]) return losses[a] < losses[b];
        const auto da = std::llabs(deltas[a]);
        const auto db = std::llabs(deltas[b]);
        if (da != db) return da < db;
        return deltas[a] < deltas[b];
    };
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        fit.loss_curve.emplace_back(deltas[k], losses[k]);
        if (better(k, best)) best = k;
    }
    fit.delta = deltas[best];
    fit.loss_value = options.stride == 1 ? losses[best]
                                         : shift_loss(source, frame_indices, fit.delta, fill, loss, options.batch_size);
    return fit;
}

}  // namespace stereorecon
