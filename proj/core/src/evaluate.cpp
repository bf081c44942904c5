#include "stereorecon/evaluate.hpp"

#include <algorithm>

#include "stereorecon/error.hpp"
#include "stereorecon/features.hpp"

namespace stereorecon {

NetworkPredictor::NetworkPredictor(StereoUNet network, std::string model_id, bool repeat_current_frame)
    : network_(std::move(network)), model_id_(std::move(model_id)), repeat_current_(repeat_current_frame) {}

std::int64_t NetworkPredictor::frames() const { return network_->config().frames; }

torch::Tensor NetworkPredictor::predict(const torch::Tensor& windows) {
    torch::NoGradGuard no_grad;
    network_->eval();
    auto input = windows;
    if (repeat_current_) {
        auto last = windows.select(1, windows.size(1) - 1).unsqueeze(1);
        input = last.expand_as(windows).contiguous();
    }
    return network_->forward(input).clamp(0.0, 1.0);
}

ShiftPredictor::ShiftPredictor(std::int64_t delta, FillPolicy fill, std::string model_id)
    : delta_(delta), fill_(fill), model_id_(std::move(model_id)) {}

torch::Tensor ShiftPredictor::predict(const torch::Tensor& windows) {
    auto current = windows.select(1, windows.size(1) - 1);
    std::vector<torch::Tensor> out;
    out.reserve(current.size(0));
    for (std::int64_t b = 0; b < current.size(0); ++b) out.push_back(shift_frame(current[b], delta_, fill_));
    return torch::stack(out);
}

MetricSuite MetricSuite::load(const MetricSuiteOptions& options) {
    MetricSuite suite;
    std::optional<FeatureWeights> vgg;
    if (options.vgg_weights) {
        vgg = FeatureWeights::from_file(*options.vgg_weights);
    } else if (options.seeded_fallback) {
        vgg = FeatureWeights::seeded(*options.seeded_fallback);
        suite.notes["extractor"] = "seeded VGG16 weights; deep metrics not comparable to published values";
    }
    if (!vgg) {
        suite.notes["lpips"] = "skipped: no VGG16 weights given";
        suite.notes["dists"] = "skipped: no VGG16 weights given";
        if (options.compute_fid) suite.notes["fid"] = "skipped: no feature extractor weights given";
        return suite;
    }
    if (options.lpips_weights) {
        suite.lpips = std::make_shared<Lpips>(*vgg, LpipsCalibration::from_file(*options.lpips_weights));
    } else if (options.seeded_fallback) {
        suite.lpips = std::make_shared<Lpips>(*vgg, LpipsCalibration::uniform());
        suite.notes["lpips"] = "uniform channel weights";
    } else {
        suite.notes["lpips"] = "skipped: no LPIPS calibration file given";
    }
    if (options.dists_weights) {
        suite.dists = std::make_shared<Dists>(*vgg, DistsCalibration::from_file(*options.dists_weights));
    } else if (options.seeded_fallback) {
        suite.dists = std::make_shared<Dists>(*vgg, DistsCalibration::uniform());
        suite.notes["dists"] = "uniform alpha/beta";
    } else {
        suite.notes["dists"] = "skipped: no DISTS weights file given";
    }
    if (options.compute_fid) suite.embedder = std::make_shared<VggPoolEmbedder>(*vgg);
    return suite;
}

std::vector<WindowRef> evaluation_windows(const std::vector<ChunkRange>& chunks, std::int64_t frames,
                                          std::int64_t align_frames) {
    const auto span = std::max(frames, align_frames);
    auto windows = sliding_window_samples(chunks, span);
    for (auto& w : windows) w.length = frames;
    return windows;
}

MetricReport evaluate(Predictor& predictor, const FrameSource& source, const std::vector<ChunkRange>& chunks,
                      MetricSuite& suite, const EvaluationOptions& options) {
    if (options.batch_size < 1) throw ConfigError("batch_size must be positive");
    const auto windows = evaluation_windows(chunks, predictor.frames(), options.align_frames);
    if (windows.empty()) throw DataError("evaluation set is empty");

    MetricReport report;
    report.model_id = predictor.id();
    report.set_id = options.set_id;
    report.sample_count = static_cast<std::int64_t>(windows.size());
    report.notes = suite.notes;

    std::vector<double> psnr_values;
    std::vector<double> ssim_values;
    std::vector<double> lpips_values;
    std::vector<double> dists_values;
    std::vector<torch::Tensor> pred_features;
    std::vector<torch::Tensor> target_features;

    for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(options.batch_size)) {
        const auto count = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), windows.size() - start);
        auto [inputs, targets] = collate(source, std::span<const WindowRef>(windows.data() + start, count));
        auto preds = predictor.predict(inputs);
        for (std::int64_t b = 0; b < preds.size(0); ++b) {
            psnr_values.push_back(psnr(preds[b], targets[b]));
            ssim_values.push_back(ssim(preds[b], targets[b]));
        }
        if (suite.lpips) {
            auto v = suite.lpips->per_sample(preds, targets).contiguous();
            lpips_values.insert(lpips_values.end(), v.data_ptr<double>(), v.data_ptr<double>() + v.numel());
        }
        if (suite.dists) {
            auto v = suite.dists->per_sample(preds, targets).contiguous();
            dists_values.insert(dists_values.end(), v.data_ptr<double>(), v.data_ptr<double>() + v.numel());
        }
        if (suite.embedder) {
            pred_features.push_back(suite.embedder->embed(preds).to(torch::kFloat64));
            target_features.push_back(suite.embedder->embed(targets).to(torch::kFloat64));
        }
    }

    auto mean = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        long double sum = 0.0L;
        for (double x : v) sum += x;
        return static_cast<double>(sum / static_cast<long double>(v.size()));
    };
    report.values["psnr"] = mean(psnr_values);
    report.values["ssim"] = mean(ssim_values);
    if (suite.lpips) report.values["lpips"] = mean(lpips_values);
    if (suite.dists) report.values["dists"] = mean(dists_values);
    if (suite.embedder) {
        if (windows.size() < 2) {
            report.notes["fid"] = "skipped: fewer than two samples";
        } else {
            auto f = fid(torch::cat(pred_features), torch::cat(target_features));
            report.values["fid"] = f.value;
            if (f.regularized)
                report.notes["fid"] = "covariances regularised with 1e-6 I (" + std::to_string(windows.size()) +
                                      " samples <= " + std::to_string(pred_features.front().size(1)) +
                                      " feature dims); " + suite.embedder->name();
            else
                report.notes["fid"] = suite.embedder->name();
        }
    }
    return report;
}

}  // namespace stereorecon
