#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/evaluate.hpp"
#include "stereorecon/features.hpp"
#include "stereorecon/metrics.hpp"
#include "stereorecon/synthetic.hpp"

namespace sr = stereorecon;

namespace {

const sr::FeatureWeights& weights() {
    static const auto w = sr::FeatureWeights::seeded(5);
    return w;
}

sr::MetricSuite seeded_suite() {
    sr::MetricSuiteOptions o;
    o.seeded_fallback = 5;
    return sr::MetricSuite::load(o);
}

}  // namespace

TEST(Psnr, AnalyticValuesAndCap) {
    const auto x = oracle::random_image(1, 8, 8);
    EXPECT_EQ(sr::psnr(x, x), sr::kPsnrCap);
    const auto a = torch::full({3, 4, 4}, 0.5);
    const auto b = torch::full({3, 4, 4}, 0.6);  // MSE 0.01
    EXPECT_NEAR(sr::psnr(a, b), 20.0, 1e-5);
    EXPECT_THROW(sr::psnr(a, torch::zeros({3, 4, 5})), sr::ShapeError);
}

TEST(Ssim, MatchesWindowedOracle) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto a = oracle::random_image(seed, 16, 16);
        const auto b = (a + 0.1 * oracle::random_image(seed + 50, 16, 16)).clamp(0, 1);
        EXPECT_NEAR(sr::ssim(a, b), oracle::windowed_ssim(a, b), 1e-6);
    }
}

TEST(Ssim, IdentityAntiCorrelationAndMinimumSize) {
    const auto x = oracle::random_image(2, 16, 20);
    EXPECT_NEAR(sr::ssim(x, x), 1.0, 1e-12);
    const auto binary = (oracle::random_image(3, 16, 16) > 0.5).to(torch::kFloat32);
    EXPECT_LT(sr::ssim(binary, 1.0 - binary), 0.0);
    EXPECT_THROW(sr::ssim(torch::zeros({3, 10, 16}), torch::zeros({3, 10, 16})), sr::ShapeError);
}

TEST(Fid, IdentityGaussianOracleAndRegularisation) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(4);
    auto a = torch::randn({5000, 4}, gen, torch::kFloat64);
    EXPECT_LE(sr::fid(a, a).value, 1e-3);
    EXPECT_FALSE(sr::fid(a, a).regularized);
    auto b = torch::randn({5000, 4}, gen, torch::kFloat64) + 1.5;  // mean offset 1.5 in every dimension
    EXPECT_NEAR(sr::fid(a, b).value, 4 * 1.5 * 1.5, 0.02 * 9.0);
    // Covariance scale: N(0, I) vs N(0, 4I) in D dims gives D (1 + 4 - 2 * 2) = D.
    auto c = 2.0 * torch::randn({20000, 4}, gen, torch::kFloat64);
    EXPECT_NEAR(sr::fid(a, c).value, 4.0, 0.15);
    auto few = torch::randn({3, 4}, gen, torch::kFloat64);
    const auto r = sr::fid(few, a);
    EXPECT_TRUE(r.regularized);
    EXPECT_GE(r.value, 0.0);
    EXPECT_THROW(sr::fid(a, torch::zeros({10, 5})), sr::ShapeError);
}

TEST(Lpips, IdentityPositivityAndUniformCalibrationFormula) {
    sr::Lpips lpips(weights(), sr::LpipsCalibration::uniform());
    const auto x = oracle::random_image(1, 24, 24);
    const auto y = oracle::random_image(2, 24, 24);
    EXPECT_EQ(lpips(x, x), 0.0);
    const double d = lpips(x, y);
    EXPECT_GT(d, 0.0);
    EXPECT_FALSE(lpips.pretrained());

    // Reference computation from the trunk's block outputs.
    torch::NoGradGuard no_grad;
    sr::Vgg16Trunk trunk(weights(), 5, sr::VggPooling::max);
    auto shift = torch::tensor({-0.030, -0.088, -0.188}).view({1, 3, 1, 1});
    auto scale = torch::tensor({0.458, 0.448, 0.450}).view({1, 3, 1, 1});
    auto fx = trunk->forward(((x * 2 - 1).unsqueeze(0) - shift) / scale).block;
    auto fy = trunk->forward(((y * 2 - 1).unsqueeze(0) - shift) / scale).block;
    double expected = 0.0;
    for (std::size_t l = 0; l < fx.size(); ++l) {
        auto nx = fx[l] / (fx[l].pow(2).sum(1, true).sqrt() + 1e-10);
        auto ny = fy[l] / (fy[l].pow(2).sum(1, true).sqrt() + 1e-10);
        expected += (nx - ny).pow(2).sum(1).mean().item<double>();
    }
    EXPECT_NEAR(d, expected, 1e-5 * expected);
}

TEST(Lpips, CalibrationFileKeysAndSizes) {
    oracle::TempDir dir("lpips");
    sr::StateDict good;
    for (int l = 0; l < 5; ++l)
        good["lin" + std::to_string(l) + ".model.1.weight"] = torch::full({1, sr::vgg16_block_channels(l), 1, 1}, 0.5);
    sr::save_state_dict_file(dir.path() / "lin.pt", good);
    const auto cal = sr::LpipsCalibration::from_file(dir.path() / "lin.pt");
    EXPECT_TRUE(cal.published);
    ASSERT_EQ(cal.weights.size(), 5u);
    const auto x = oracle::random_image(1, 16, 16);
    const auto y = oracle::random_image(2, 16, 16);
    sr::Lpips half(weights(), cal);
    sr::Lpips unit(weights(), sr::LpipsCalibration::uniform());
    EXPECT_NEAR(half(x, y), 0.5 * unit(x, y), 1e-6);
    auto bad = good;
    bad.erase("lin4.model.1.weight");
    sr::save_state_dict_file(dir.path() / "bad.pt", bad);
    EXPECT_THROW(sr::LpipsCalibration::from_file(dir.path() / "bad.pt"), sr::WeightsError);
    EXPECT_THROW(sr::LpipsCalibration::from_file(dir.path() / "absent.pt"), sr::WeightsError);
}

TEST(Dists, IdentityRangeAndFileLoading) {
    sr::Dists dists(weights(), sr::DistsCalibration::uniform());
    const auto x = oracle::random_image(1, 32, 32);
    EXPECT_NEAR(dists(x, x), 0.0, 1e-7);
    const double d = dists(x, oracle::random_image(2, 32, 32));
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1.0);
    oracle::TempDir dir("dists");
    sr::StateDict ab{{"alpha", torch::rand({1, 1475, 1, 1})}, {"beta", torch::rand({1, 1475, 1, 1})}};
    sr::save_state_dict_file(dir.path() / "dists.pt", ab);
    const auto cal = sr::DistsCalibration::from_file(dir.path() / "dists.pt");
    EXPECT_TRUE(cal.published);
    sr::Dists calibrated(weights(), cal);
    EXPECT_NEAR(calibrated(x, x), 0.0, 1e-7);
    sr::save_state_dict_file(dir.path() / "short.pt", {{"alpha", torch::rand({10})}, {"beta", torch::rand({10})}});
    EXPECT_THROW(sr::DistsCalibration::from_file(dir.path() / "short.pt"), sr::WeightsError);
}

TEST(DeepMetrics, GrowWithNoise) {
    sr::Lpips lpips(weights(), sr::LpipsCalibration::uniform());
    sr::Dists dists(weights(), sr::DistsCalibration::uniform());
    const auto x = sr::make_texture(32, 48, 9);
    double prev_l = 0.0;
    double prev_d = 0.0;
    for (double sigma : {0.01, 0.05, 0.1}) {
        auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
        const auto y = (x + sigma * torch::randn(x.sizes(), gen)).clamp(0, 1);
        const double l = lpips(y, x);
        const double d = dists(y, x);
        EXPECT_GT(l, prev_l);
        EXPECT_GT(d, prev_d);
        prev_l = l;
        prev_d = d;
    }
}

TEST(Spearman, IdentityReversalTiesAndMismatch) {
    sr::Ranking a{{{"m1", 1}, {"m2", 2}, {"m3", 3}, {"m4", 4}}, sr::Direction::higher_better};
    EXPECT_NEAR(sr::spearman(a, a), 1.0, 1e-12);
    sr::Ranking b{{{"m1", 1}, {"m2", 2}, {"m3", 3}, {"m4", 4}}, sr::Direction::lower_better};
    EXPECT_NEAR(sr::spearman(a, b), -1.0, 1e-12);
    // Ties receive average ranks: scores (1, 2, 2, 4) -> ranks (4, 2.5, 2.5, 1) when higher is better.
    sr::Ranking t{{{"m1", 1}, {"m2", 2}, {"m3", 2}, {"m4", 4}}, sr::Direction::higher_better};
    const auto ranks = t.ranks();
    EXPECT_EQ(ranks.at("m2"), 2.5);
    EXPECT_EQ(ranks.at("m1"), 4.0);
    // Pearson correlation of (1,2,3,4) with (1,2.5,2.5,4).
    EXPECT_NEAR(sr::spearman(a, t), 0.9486832980505138, 1e-12);
    sr::Ranking other{{{"m1", 1}, {"m2", 2}, {"m3", 3}, {"x", 4}}, sr::Direction::higher_better};
    EXPECT_THROW(sr::spearman(a, other), sr::ConfigError);
    sr::Ranking dup{{{"m1", 1}, {"m1", 2}}, sr::Direction::higher_better};
    EXPECT_THROW(dup.ranks(), sr::ConfigError);
}

TEST(MetricReport, ColumnOrderAndDirections) {
    sr::MetricReport r;
    r.model_id = "m";
    r.sample_count = 3;
    r.values = {{"psnr", 20.0}, {"dists", 0.1}};
    r.notes = {{"lpips", "skipped: no file"}};
    EXPECT_EQ(r.csv_header(), "model_id,set_id,sample_count,dists,lpips,fid,psnr,ssim,notes");
    EXPECT_EQ(r.csv_row(), "m,validation,3,0.1,,,20,,lpips=skipped: no file");
    EXPECT_EQ(sr::MetricReport::direction("ssim"), sr::Direction::higher_better);
    EXPECT_EQ(sr::MetricReport::direction("fid"), sr::Direction::lower_better);
    EXPECT_NE(r.text_table().find("skipped"), std::string::npos);
}

class CopyPredictor final : public sr::Predictor {
public:
    std::int64_t frames() const override { return 2; }
    torch::Tensor predict(const torch::Tensor& windows) override { return windows.select(1, 1); }
    std::string id() const override { return "copy"; }
};

TEST(Evaluate, PerfectCopyHitsIdentityValues) {
    sr::InMemoryStereo same;
    for (std::uint64_t i = 0; i < 6; ++i) {
        const auto img = sr::make_texture(48, 64, i);
        same.push_back(img, img);
    }
    auto suite = seeded_suite();
    CopyPredictor copy;
    const auto report = sr::evaluate(copy, same, {{0, 6}}, suite);
    EXPECT_EQ(report.sample_count, 5);
    EXPECT_EQ(report.values.at("psnr"), sr::kPsnrCap);
    EXPECT_NEAR(report.values.at("ssim"), 1.0, 1e-9);
    EXPECT_NEAR(report.values.at("lpips"), 0.0, 1e-9);
    EXPECT_NEAR(report.values.at("dists"), 0.0, 1e-6);
    EXPECT_NEAR(report.values.at("fid"), 0.0, 1e-2);
    EXPECT_TRUE(report.notes.count("extractor"));
}

TEST(Evaluate, DeterministicBatchIndependentAndSkipsWithNotes) {
    sr::SyntheticSceneSpec spec;
    spec.num_frames = 9;
    spec.height = 48;
    spec.width = 64;
    spec.true_disparity = -4;
    spec.motion_x = 1;
    const auto scene = sr::generate_synthetic_stereo(spec);
    auto suite = seeded_suite();
    sr::ShiftPredictor shift(-2, sr::FillPolicy::copy_original);
    sr::EvaluationOptions one;
    one.batch_size = 1;
    sr::EvaluationOptions four;
    four.batch_size = 4;
    const auto a = sr::evaluate(shift, scene, {{0, 9}}, suite, one);
    const auto b = sr::evaluate(shift, scene, {{0, 9}}, suite, four);
    const auto c = sr::evaluate(shift, scene, {{0, 9}}, suite, four);
    for (const auto& [k, v] : a.values) {
        EXPECT_NEAR(v, b.values.at(k), 1e-6 * std::max(1.0, std::abs(v))) << k;
        EXPECT_EQ(b.values.at(k), c.values.at(k)) << k;
    }
    // Reordering the evaluation chunks leaves the means unchanged.
    const auto split = sr::evaluate(shift, scene, {{5, 4}, {0, 5}}, suite, four);
    const auto joined = sr::evaluate(shift, scene, {{0, 5}, {5, 4}}, suite, four);
    for (const auto& [k, v] : split.values) EXPECT_NEAR(v, joined.values.at(k), 1e-6 * std::max(1.0, std::abs(v))) << k;

    auto bare = sr::MetricSuite::load({});
    const auto skipped = sr::evaluate(shift, scene, {{0, 9}}, bare);
    EXPECT_EQ(skipped.values.count("lpips"), 0u);
    EXPECT_EQ(skipped.values.count("fid"), 0u);
    EXPECT_TRUE(skipped.notes.count("lpips"));
    EXPECT_TRUE(skipped.notes.count("dists"));
    EXPECT_TRUE(skipped.notes.count("fid"));
    EXPECT_EQ(skipped.values.count("psnr"), 1u);
}

TEST(Evaluate, AlignedWindowsShareTargets) {
    const auto w1 = sr::evaluation_windows({{0, 10}}, 1, 5);
    const auto w5 = sr::evaluation_windows({{0, 10}}, 5, 5);
    ASSERT_EQ(w1.size(), w5.size());
    for (std::size_t i = 0; i < w1.size(); ++i) EXPECT_EQ(w1[i].last, w5[i].last);
    EXPECT_EQ(w1.front().length, 1);
}

TEST(Evaluate, MissingWeightFileIsAnError) {
    sr::MetricSuiteOptions o;
    o.vgg_weights = "/nonexistent/vgg16.pth";
    EXPECT_THROW(sr::MetricSuite::load(o), sr::WeightsError);
}
