#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/features.hpp"
#include "stereorecon/loss.hpp"

namespace sr = stereorecon;

namespace {

const sr::FeatureWeights& weights() {
    static const auto w = sr::FeatureWeights::seeded(3);
    return w;
}

}  // namespace

TEST(PixelLoss, MatchesLoopOracles) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto a = oracle::random_image(seed, 7, 9);
        const auto b = oracle::random_image(seed + 100, 7, 9);
        EXPECT_NEAR(sr::mse_loss(a, b).item<double>(), oracle::loop_mse(a, b), 1e-6);
        EXPECT_NEAR(sr::mae_loss(a, b).item<double>(), oracle::loop_mae(a, b), 1e-6);
        EXPECT_NEAR(sr::mse_loss(sr::Frame(a, 0), sr::Frame(b, 0)), oracle::loop_mse(a, b), 1e-12);
        EXPECT_NEAR(sr::mae_loss(sr::Frame(a, 0), sr::Frame(b, 0)), oracle::loop_mae(a, b), 1e-12);
    }
    EXPECT_THROW(sr::mse_loss(torch::zeros({3, 4, 4}), torch::zeros({3, 4, 5})), sr::ShapeError);
    EXPECT_THROW(sr::mae_loss(torch::zeros({3, 4, 4}), torch::zeros({3, 5, 4})), sr::ShapeError);
}

TEST(PerceptualLoss, ZeroOnIdenticalPositiveOtherwise) {
    sr::PerceptualLoss loss(weights());
    const auto a = oracle::random_image(1, 16, 16);
    const auto b = oracle::random_image(2, 16, 16);
    EXPECT_EQ(loss(a, a).item<double>(), 0.0);
    EXPECT_GT(loss(a, b).item<double>(), 0.0);
    EXPECT_FALSE(loss.pretrained());
}

TEST(PerceptualLoss, BatchMeanPerSampleAndCachedTargetsAgree) {
    sr::PerceptualLoss loss(weights());
    auto pred = torch::stack({oracle::random_image(1, 16, 16), oracle::random_image(2, 16, 16)});
    auto target = torch::stack({oracle::random_image(3, 16, 16), oracle::random_image(4, 16, 16)});
    const auto per = loss.per_sample(pred, target);
    ASSERT_EQ(per.numel(), 2);
    EXPECT_NEAR(loss(pred, target).item<double>(), per.mean().item<double>(), 1e-6);
    EXPECT_NEAR(per[1].item<double>(), loss(pred[1], target[1]).item<double>(), 1e-6);
    const auto cached = loss.per_sample(pred, loss.target_features(target));
    EXPECT_TRUE(torch::allclose(per, cached));
}

TEST(PerceptualLoss, GradientMatchesCentralDifferences) {
    sr::PerceptualLoss loss(weights());
    loss.to(torch::kFloat64);
    const auto target = oracle::random_image(8, 8, 8).to(torch::kFloat64);
    auto x = oracle::random_image(9, 8, 8).to(torch::kFloat64).requires_grad_(true);
    loss(x, target).backward();
    const auto grad = x.grad();
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::int64_t i = 0; i < 192; i += 7) {
        auto p = x.detach().clone();
        auto m = x.detach().clone();
        p.view({-1})[i] += eps;
        m.view({-1})[i] -= eps;
        const double fd = (loss(p, target).item<double>() - loss(m, target).item<double>()) / (2 * eps);
        worst = std::max(worst, std::abs(fd - grad.view({-1})[i].item<double>()));
    }
    EXPECT_LE(worst, 1e-3 * std::max(1e-8, grad.abs().max().item<double>()));
}

TEST(LossFunction, DispatchesByKind) {
    const auto a = oracle::random_image(1, 8, 8);
    const auto b = oracle::random_image(2, 8, 8);
    EXPECT_EQ(sr::LossFunction::mse()(a, b).item<double>(), sr::mse_loss(a, b).item<double>());
    EXPECT_EQ(sr::LossFunction::mae()(a, b).item<double>(), sr::mae_loss(a, b).item<double>());
    EXPECT_THROW(sr::LossFunction::make(sr::LossKind::perceptual, std::nullopt), sr::WeightsError);
    const auto p = sr::LossFunction::make(sr::LossKind::perceptual, weights());
    ASSERT_NE(p.perceptual_loss(), nullptr);
    EXPECT_EQ(p.name(), "perceptual");
    EXPECT_EQ(sr::parse_loss_kind("mae"), sr::LossKind::mae);
    EXPECT_THROW(sr::parse_loss_kind("l3"), sr::ConfigError);
}

TEST(FeatureWeights, FileRoundTripReproducesTheTrunk) {
    oracle::TempDir dir("weights");
    // Keys follow torchvision: features.N.weight / features.N.bias.
    sr::save_state_dict_file(dir.path() / "vgg.pt", weights().tensors);
    const auto loaded = sr::FeatureWeights::from_file(dir.path() / "vgg.pt");
    EXPECT_TRUE(loaded.pretrained);
    EXPECT_EQ(loaded.checksum.size(), 64u);
    torch::NoGradGuard no_grad;
    sr::Vgg16Trunk a(weights(), 3, sr::VggPooling::max);
    sr::Vgg16Trunk b(loaded, 3, sr::VggPooling::max);
    const auto x = torch::rand({1, 3, 16, 16});
    EXPECT_TRUE(torch::equal(a->forward(x).block.back(), b->forward(x).block.back()));
}

TEST(FeatureWeights, MissingOrLegacyFilesAreWeightsErrors) {
    oracle::TempDir dir("weights-bad");
    EXPECT_THROW(sr::FeatureWeights::from_file(dir.path() / "absent.pth"), sr::WeightsError);
    std::ofstream(dir.path() / "legacy.pth", std::ios::binary) << "\x80\x02legacy pickle";
    EXPECT_THROW(sr::load_state_dict_file(dir.path() / "legacy.pth"), sr::WeightsError);
}

TEST(Vgg16Trunk, FrozenWithExpectedChannels) {
    sr::Vgg16Trunk trunk(weights(), 5, sr::VggPooling::l2);
    for (const auto& p : trunk->parameters()) EXPECT_FALSE(p.requires_grad());
    torch::NoGradGuard no_grad;
    const auto out = trunk->forward(torch::rand({1, 3, 32, 32}));
    ASSERT_EQ(out.block.size(), 5u);
    for (std::int64_t b = 0; b < 5; ++b) EXPECT_EQ(out.block[b].size(1), sr::vgg16_block_channels(b));
    EXPECT_EQ(out.block[1].size(2), 16);
}
