#include "stereorecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "stereorecon/checksum.hpp"
#include "stereorecon/error.hpp"

namespace stereorecon {
namespace {

namespace F = torch::nn::functional;

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
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

torch::Tensor gaussian_window(std::int64_t size, double sigma) {
    auto coords = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
    auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
    return g / g.sum();
}

// Symmetric PSD square root through an eigendecomposition.
torch::Tensor sqrt_psd(const torch::Tensor& m) {
    auto [eigenvalues, eigenvectors] = torch::linalg_eigh(m);
    return eigenvectors.matmul(torch::diag(eigenvalues.clamp_min(0.0).sqrt())).matmul(eigenvectors.transpose(0, 1));
}

std::vector<double> average_ranks(const std::vector<double>& scores, Direction direction) {
    const auto n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return direction == Direction::higher_better ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (auto k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double psnr(const torch::Tensor& pred, const torch::Tensor& target) {
    check_pair(pred, target, "psnr");
    const double mse = (pred.to(torch::kFloat64) - target.to(torch::kFloat64)).square().mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& pred, const torch::Tensor& target) {
    check_pair(pred, target, "ssim");
    constexpr std::int64_t kWindow = 11;
    if (pred.dim() != 3) throw ShapeError("ssim expects a [C, H, W] image");
    if (pred.size(1) < kWindow || pred.size(2) < kWindow)
        throw ShapeError("ssim needs images of at least 11x11 pixels");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const auto channels = pred.size(0);
    auto x = pred.to(torch::kFloat64).unsqueeze(0);
    auto y = target.to(torch::kFloat64).unsqueeze(0);
    // Separable Gaussian applied to all five moment maps in one grouped pass.
    const auto groups = 5 * channels;
    const auto g = gaussian_window(kWindow, 1.5);
    auto rows = g.view({1, 1, 1, kWindow}).repeat({groups, 1, 1, 1});
    auto cols = g.view({1, 1, kWindow, 1}).repeat({groups, 1, 1, 1});
    auto stacked = torch::cat({x, y, x * x, y * y, x * y}, 1);
    auto filtered = F::conv2d(F::conv2d(stacked, rows, F::Conv2dFuncOptions().groups(groups)), cols,
                              F::Conv2dFuncOptions().groups(groups));
    auto parts = filtered.split(channels, 1);
    const auto& mu_x = parts[0];
    const auto& mu_y = parts[1];
    auto sxx = parts[2] - mu_x * mu_x;
    auto syy = parts[3] - mu_y * mu_y;
    auto sxy = parts[4] - mu_x * mu_y;
    auto map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
    return map.mean().item<double>();
}

FidResult fid(const torch::Tensor& features_a, const torch::Tensor& features_b) {
    if (features_a.dim() != 2 || features_b.dim() != 2 || features_a.size(1) != features_b.size(1))
        throw ShapeError("fid expects feature matrices [N, D] and [M, D]");
    if (features_a.size(0) < 2 || features_b.size(0) < 2) throw ShapeError("fid needs at least two samples per set");
    const auto d = features_a.size(1);
    auto a = features_a.to(torch::kFloat64);
    auto b = features_b.to(torch::kFloat64);
    auto mu_a = a.mean(0);
    auto mu_b = b.mean(0);
    auto cov = [](const torch::Tensor& f, const torch::Tensor& mu) {
        auto c = f - mu;
        return c.transpose(0, 1).matmul(c) / static_cast<double>(f.size(0) - 1);
    };
    auto sigma_a = cov(a, mu_a);
    auto sigma_b = cov(b, mu_b);
    FidResult result;
    if (features_a.size(0) <= d || features_b.size(0) <= d) {
        auto eye = torch::eye(d, torch::kFloat64) * 1e-6;
        sigma_a = sigma_a + eye;
        sigma_b = sigma_b + eye;
        result.regularized = true;
    }
    auto root_a = sqrt_psd(sigma_a);
    auto middle = root_a.matmul(sigma_b).matmul(root_a);
    middle = (middle + middle.transpose(0, 1)) / 2.0;
    const double trace_sqrt = torch::linalg_eigvalsh(middle).clamp_min(0.0).sqrt().sum().item<double>();
    const double mean_term = (mu_a - mu_b).square().sum().item<double>();
    const double value = mean_term + sigma_a.trace().item<double>() + sigma_b.trace().item<double>() - 2.0 * trace_sqrt;
    result.value = std::max(0.0, value);
    return result;
}

VggPoolEmbedder::VggPoolEmbedder(const FeatureWeights& weights) : trunk_(Vgg16Trunk(weights, 5, VggPooling::max)) {}

torch::Tensor VggPoolEmbedder::embed(const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    auto out = trunk_->forward(imagenet_normalize(as_batch(images)));
    return out.block.back().mean({2, 3});
}

std::string VggPoolEmbedder::name() const {
    return std::string("vgg16-pool5-512") + (trunk_->pretrained() ? "" : " (seeded weights)");
}

LpipsCalibration LpipsCalibration::from_file(const std::filesystem::path& path) {
    auto tensors = load_state_dict_file(path);
    LpipsCalibration c;
    for (int l = 0; l < 5; ++l) {
        const auto key = "lin" + std::to_string(l) + ".model.1.weight";
        auto it = tensors.find(key);
        if (it == tensors.end()) throw WeightsError(path.string() + " lacks " + key);
        if (it->second.numel() != vgg16_block_channels(l)) throw WeightsError(key + " has the wrong size");
        c.weights.push_back(it->second.flatten());
    }
    c.checksum = sha256_file(path);
    c.published = true;
    return c;
}

LpipsCalibration LpipsCalibration::uniform() {
    LpipsCalibration c;
    for (int l = 0; l < 5; ++l) c.weights.push_back(torch::ones({vgg16_block_channels(l)}));
    c.checksum = "uniform";
    return c;
}

Lpips::Lpips(const FeatureWeights& weights, LpipsCalibration calibration)
    : trunk_(Vgg16Trunk(weights, 5, VggPooling::max)), calibration_(std::move(calibration)) {
    if (calibration_.weights.size() != 5) throw WeightsError("LPIPS needs five calibration vectors");
}

torch::Tensor Lpips::per_sample(const torch::Tensor& pred, const torch::Tensor& target) const {
    check_pair(pred, target, "lpips");
    torch::NoGradGuard no_grad;
    auto opts = torch::TensorOptions().dtype(torch::kFloat32);
    auto shift = torch::tensor({-0.030, -0.088, -0.188}, opts).view({1, 3, 1, 1});
    auto scale = torch::tensor({0.458, 0.448, 0.450}, opts).view({1, 3, 1, 1});
    auto prep = [&](const torch::Tensor& x) { return (as_batch(x).to(torch::kFloat32) * 2.0 - 1.0 - shift) / scale; };
    auto fa = trunk_->forward(prep(pred)).block;
    auto fb = trunk_->forward(prep(target)).block;
    auto unit = [](const torch::Tensor& f) { return f / (f.square().sum(1, true).sqrt() + 1e-10); };
    torch::Tensor total;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        auto diff = (unit(fa[l]) - unit(fb[l])).square();
        auto weighted = (diff * calibration_.weights[l].view({1, -1, 1, 1})).sum(1);
        auto layer = weighted.mean({1, 2});
        total = total.defined() ? total + layer : layer;
    }
    return total.to(torch::kFloat64);
}

double Lpips::operator()(const torch::Tensor& pred, const torch::Tensor& target) const {
    return per_sample(pred, target).mean().item<double>();
}

namespace {
constexpr std::int64_t kDistsChannels[6] = {3, 64, 128, 256, 512, 512};
constexpr std::int64_t kDistsTotal = 1475;
}  // namespace

DistsCalibration DistsCalibration::from_file(const std::filesystem::path& path) {
    auto tensors = load_state_dict_file(path);
    DistsCalibration c;
    auto a = tensors.find("alpha");
    auto b = tensors.find("beta");
    if (a == tensors.end() || b == tensors.end()) throw WeightsError(path.string() + " lacks alpha/beta");
    if (a->second.numel() != kDistsTotal || b->second.numel() != kDistsTotal)
        throw WeightsError("DISTS alpha/beta must have 1475 entries");
    c.alpha = a->second.flatten();
    c.beta = b->second.flatten();
    c.checksum = sha256_file(path);
    c.published = true;
    return c;
}

DistsCalibration DistsCalibration::uniform() {
    DistsCalibration c;
    c.alpha = torch::ones({kDistsTotal});
    c.beta = torch::ones({kDistsTotal});
    c.checksum = "uniform";
    return c;
}

Dists::Dists(const FeatureWeights& weights, DistsCalibration calibration)
    : trunk_(Vgg16Trunk(weights, 5, VggPooling::l2)), calibration_(std::move(calibration)) {}

torch::Tensor Dists::per_sample(const torch::Tensor& pred, const torch::Tensor& target) const {
    check_pair(pred, target, "dists");
    torch::NoGradGuard no_grad;
    auto x = as_batch(pred).to(torch::kFloat32);
    auto y = as_batch(target).to(torch::kFloat32);
    auto feats = [&](const torch::Tensor& img) {
        std::vector<torch::Tensor> f{img};
        auto blocks = trunk_->forward(imagenet_normalize(img)).block;
        f.insert(f.end(), blocks.begin(), blocks.end());
        return f;
    };
    auto fx = feats(x);
    auto fy = feats(y);
    const double w_sum = (calibration_.alpha.sum() + calibration_.beta.sum()).item<double>();
    constexpr double c1 = 1e-6;
    constexpr double c2 = 1e-6;
    torch::Tensor similarity = torch::zeros({x.size(0)}, torch::kFloat64);
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < fx.size(); ++k) {
        const auto ch = kDistsChannels[k];
        auto alpha = (calibration_.alpha.narrow(0, offset, ch) / w_sum).to(torch::kFloat64).view({1, -1});
        auto beta = (calibration_.beta.narrow(0, offset, ch) / w_sum).to(torch::kFloat64).view({1, -1});
        offset += ch;
        auto a = fx[k].to(torch::kFloat64);
        auto b = fy[k].to(torch::kFloat64);
        auto mean_a = a.mean({2, 3});
        auto mean_b = b.mean({2, 3});
        auto s1 = (2.0 * mean_a * mean_b + c1) / (mean_a.square() + mean_b.square() + c1);
        auto var_a = (a - mean_a.unsqueeze(-1).unsqueeze(-1)).square().mean({2, 3});
        auto var_b = (b - mean_b.unsqueeze(-1).unsqueeze(-1)).square().mean({2, 3});
        auto cov = (a * b).mean({2, 3}) - mean_a * mean_b;
        auto s2 = (2.0 * cov + c2) / (var_a + var_b + c2);
        similarity = similarity + (alpha * s1).sum(1) + (beta * s2).sum(1);
    }
    return (1.0 - similarity).clamp(0.0, 1.0);
}

double Dists::operator()(const torch::Tensor& pred, const torch::Tensor& target) const {
    return per_sample(pred, target).mean().item<double>();
}

std::map<std::string, double> Ranking::ranks() const {
    std::vector<double> scores;
    scores.reserve(entries.size());
    for (const auto& [id, s] : entries) scores.push_back(s);
    const auto r = average_ranks(scores, direction);
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!out.emplace(entries[i].first, r[i]).second)
            throw ConfigError("ranking contains duplicate id '" + entries[i].first + "'");
    }
    return out;
}

double spearman(const Ranking& a, const Ranking& b) {
    const auto ra = a.ranks();
    const auto rb = b.ranks();
    if (ra.size() != rb.size()) throw ConfigError("rankings cover different model sets");
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& [id, rank] : ra) {
        auto it = rb.find(id);
        if (it == rb.end()) throw ConfigError("model '" + id + "' missing from the second ranking");
        x.push_back(rank);
        y.push_back(it->second);
    }
    const auto n = static_cast<double>(x.size());
    if (x.size() < 2) throw ConfigError("spearman needs at least two items");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

const std::vector<std::string>& MetricReport::metric_order() {
    static const std::vector<std::string> order = {"dists", "lpips", "fid", "psnr", "ssim"};
    return order;
}

Direction MetricReport::direction(const std::string& metric) {
    return (metric == "psnr" || metric == "ssim") ? Direction::higher_better : Direction::lower_better;
}

std::string MetricReport::csv_header() const {
    std::string h = "model_id,set_id,sample_count";
    for (const auto& m : metric_order()) h += "," + m;
    return h + ",notes";
}

std::string MetricReport::csv_row() const {
    std::ostringstream row;
    row << model_id << ',' << set_id << ',' << sample_count;
    for (const auto& m : metric_order()) {
        row << ',';
        if (auto it = values.find(m); it != values.end()) row << std::setprecision(10) << it->second;
    }
    std::string joined;
    for (const auto& [k, v] : notes) joined += (joined.empty() ? "" : "; ") + k + "=" + v;
    std::replace(joined.begin(), joined.end(), ',', ' ');
    row << ',' << joined;
    return row.str();
}

std::string MetricReport::text_table() const {
    std::ostringstream out;
    out << "model: " << model_id << "  set: " << set_id << "  samples: " << sample_count << '\n';
    out << std::left << std::setw(8) << "metric" << std::setw(14) << "value" << "better\n";
    for (const auto& m : metric_order()) {
        out << std::left << std::setw(8) << m;
        if (auto it = values.find(m); it != values.end())
            out << std::setw(14) << std::fixed << std::setprecision(4) << it->second;
        else
            out << std::setw(14) << "skipped";
        out << (direction(m) == Direction::higher_better ? "higher" : "lower") << '\n';
    }
    for (const auto& [k, v] : notes) out << "note: " << k << ": " << v << '\n';
    return out.str();
}

}  // namespace stereorecon
