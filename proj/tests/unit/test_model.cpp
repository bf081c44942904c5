#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stereorecon/checkpoint.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/model.hpp"

namespace sr = stereorecon;

namespace {

sr::ModelConfig small(sr::TemporalMode mode, std::int64_t k) {
    sr::ModelConfig c;
    c.frames = k;
    c.temporal_mode = mode;
    c.base_channels = 4;
    c.depth = 3;
    return c;
}

std::int64_t conv(std::int64_t in, std::int64_t out, std::int64_t kernel_area) { return in * out * kernel_area + out; }
std::int64_t double_conv(std::int64_t in, std::int64_t out) { return conv(in, out, 9) + conv(out, out, 9); }

}  // namespace

TEST(ModelConfig, ValidationNamesTheConflict) {
    auto c = small(sr::TemporalMode::single, 5);
    try {
        c.validate();
        FAIL();
    } catch (const sr::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("frames"), std::string::npos);
    }
    c = small(sr::TemporalMode::stack, 5);
    c.depth = 1;
    EXPECT_THROW(c.validate(), sr::ConfigError);
    c.depth = 5;
    c.base_channels = 0;
    EXPECT_THROW(c.validate(), sr::ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndDifferences) {
    auto c = small(sr::TemporalMode::spatio_temporal, 5);
    c.upsampling = sr::Upsampling::bilinear;
    c.temporal_module = sr::TemporalModule::average;
    c.sigmoid_output = true;
    nlohmann::json j = c;
    EXPECT_EQ(j.get<sr::ModelConfig>(), c);
    auto d = c;
    d.frames = 10;
    const auto diffs = sr::config_differences(c, d);
    ASSERT_EQ(diffs.size(), 1u);
    EXPECT_NE(diffs[0].find("frames"), std::string::npos);
}

TEST(StereoUNet, OutputMatchesInputSizeForEveryMode) {
    torch::NoGradGuard no_grad;
    for (auto mode : {sr::TemporalMode::single, sr::TemporalMode::stack, sr::TemporalMode::spatio_temporal}) {
        const std::int64_t k = mode == sr::TemporalMode::single ? 1 : 3;
        for (auto up : {sr::Upsampling::transposed_conv, sr::Upsampling::bilinear}) {
            auto c = small(mode, k);
            c.upsampling = up;
            auto net = sr::build_model(c, 0);
            for (auto [h, w] : {std::pair{16, 24}, std::pair{13, 29}, std::pair{3, 5}}) {
                auto y = net->forward(torch::rand({2, k, 3, h, w}));
                EXPECT_EQ(y.sizes(), torch::IntArrayRef({2, 3, h, w}));
                EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
            }
        }
    }
}

TEST(StereoUNet, WrongFrameCountIsAShapeError) {
    auto net = sr::build_model(small(sr::TemporalMode::stack, 3), 0);
    EXPECT_THROW(net->forward(torch::rand({1, 2, 3, 8, 8})), sr::ShapeError);
    EXPECT_THROW(net->forward(torch::rand({1, 3, 8, 8})), sr::ShapeError);
}

TEST(StereoUNet, ParameterCountMatchesLayerArithmetic) {
    for (std::int64_t depth : {5, 6}) {
        sr::ModelConfig c;
        c.depth = depth;
        c.base_channels = 8;
        auto net = sr::build_model(c, 0);
        std::int64_t expected = 0;
        auto ch = [&](std::int64_t l) { return 8 << l; };
        for (std::int64_t l = 0; l < depth; ++l) expected += double_conv(l == 0 ? 3 : ch(l - 1), ch(l));
        for (std::int64_t l = 0; l + 1 < depth; ++l)
            expected += conv(ch(l + 1), ch(l), 4) + double_conv(2 * ch(l), ch(l));
        expected += conv(8, 3, 1);
        EXPECT_EQ(sr::parameter_count(*net), expected) << "depth " << depth;
    }
    // Going from 5 to 6 levels adds one encoder level and one decoder block.
    sr::ModelConfig five;
    five.base_channels = 8;
    auto six = five;
    six.depth = 6;
    const auto added = double_conv(128, 256) + conv(256, 128, 4) + double_conv(256, 128);
    EXPECT_EQ(sr::parameter_count(*sr::build_model(six, 0)) - sr::parameter_count(*sr::build_model(five, 0)), added);
}

TEST(StereoUNet, SpatioTemporalKOneWithIdentityFusionEqualsSingleFrame) {
    torch::NoGradGuard no_grad;
    auto single = sr::build_model(small(sr::TemporalMode::single, 1), 1);
    auto st = sr::build_model(small(sr::TemporalMode::spatio_temporal, 1), 2);
    auto params = single->named_parameters();
    for (auto& p : st->named_parameters())
        if (auto* s = params.find(p.key())) p.value().copy_(*s);
    st->set_identity_temporal();
    auto x = torch::rand({2, 1, 3, 16, 16});
    EXPECT_LE((single->forward(x) - st->forward(x)).abs().max().item<double>(), 1e-5);
}

TEST(TemporalFusion, AverageAndMaximumReduceOverFrames) {
    sr::TemporalFusion avg(sr::TemporalModule::average, 2, 3);
    sr::TemporalFusion mx(sr::TemporalModule::maximum, 2, 3);
    std::vector<torch::Tensor> maps{torch::full({2, 2, 2}, 1.0), torch::full({2, 2, 2}, 4.0), torch::full({2, 2, 2}, 1.0)};
    EXPECT_TRUE(torch::allclose(sr::apply_temporal_module(avg, maps), torch::full({2, 2, 2}, 2.0)));
    EXPECT_TRUE(torch::allclose(sr::apply_temporal_module(mx, maps), torch::full({2, 2, 2}, 4.0)));
    std::vector<torch::Tensor> mismatched{torch::zeros({2, 2, 2}), torch::zeros({2, 3, 2}), torch::zeros({2, 2, 2})};
    EXPECT_THROW(sr::apply_temporal_module(avg, mismatched), sr::ShapeError);
}

TEST(TemporalFusion, IdentityConvPassesTheLastFrame) {
    torch::NoGradGuard no_grad;
    sr::TemporalFusion f(sr::TemporalModule::conv3d, 3, 4);
    f->set_identity();
    auto maps = torch::rand({2, 4, 3, 5, 6});
    EXPECT_TRUE(torch::allclose(f->forward(maps), maps.select(1, 3), 1e-6, 1e-6));
}

TEST(StackChannels, UnstackInvertsStack) {
    auto w = torch::rand({2, 5, 3, 4, 4});
    auto s = sr::stack_channels(w);
    EXPECT_EQ(s.sizes(), torch::IntArrayRef({2, 15, 4, 4}));
    EXPECT_TRUE(torch::equal(s.narrow(1, 0, 3), w.select(1, 0)));
    EXPECT_TRUE(torch::equal(sr::unstack_channels(s, 5), w));
}

TEST(StereoUNet, SkipAblationChangesOutput) {
    torch::NoGradGuard no_grad;
    auto net = sr::build_model(small(sr::TemporalMode::single, 1), 3);
    auto x = torch::rand({1, 1, 3, 16, 16});
    const auto base = net->forward(x);
    net->ablate_skip(0);
    EXPECT_FALSE(torch::allclose(base, net->forward(x)));
    net->ablate_skip(std::nullopt);
    EXPECT_TRUE(torch::equal(base, net->forward(x)));
}

TEST(StereoUNet, SigmoidAndExtraSkipOptions) {
    torch::NoGradGuard no_grad;
    auto c = small(sr::TemporalMode::single, 1);
    c.sigmoid_output = true;
    auto y = sr::build_model(c, 0)->forward(torch::rand({1, 1, 3, 8, 8}));
    EXPECT_GE(y.min().item<double>(), 0.0);
    EXPECT_LE(y.max().item<double>(), 1.0);
    auto e = small(sr::TemporalMode::single, 1);
    e.extra_skip = true;
    auto plain = sr::build_model(small(sr::TemporalMode::single, 1), 0);
    auto skip = sr::build_model(e, 0);
    auto x = torch::rand({1, 1, 3, 8, 8});
    EXPECT_TRUE(torch::allclose(skip->forward(x), plain->forward(x) + x.select(1, 0), 1e-5, 1e-5));
}

TEST(Checkpoint, SaveLoadRoundTripAndTamperDetection) {
    oracle::TempDir dir("ckpt");
    auto c = small(sr::TemporalMode::spatio_temporal, 2);
    auto net = sr::build_model(c, 9);
    sr::ModelManifest m;
    m.config = c;
    m.init_seed = 9;
    m.model_id = "st2";
    m.step = 12;
    sr::save_model(dir.path() / "m", net, m);
    auto loaded = sr::load_model(dir.path() / "m");
    EXPECT_EQ(loaded.manifest.config, c);
    EXPECT_EQ(loaded.manifest.step, 12);
    EXPECT_FALSE(loaded.manifest.parameter_sha256.empty());
    torch::NoGradGuard no_grad;
    auto x = torch::rand({1, 2, 3, 8, 8});
    net->eval();
    loaded.network->eval();
    EXPECT_TRUE(torch::equal(net->forward(x), loaded.network->forward(x)));

    auto manifest = sr::read_json_file(dir.path() / "m" / sr::kManifestFile);
    manifest["parameter_sha256"] = std::string(64, '0');
    sr::write_json_file(dir.path() / "m" / sr::kManifestFile, manifest);
    EXPECT_THROW(sr::load_model(dir.path() / "m"), sr::WeightsError);
}

TEST(Prediction, ForwardOnAWindow) {
    auto net = sr::build_model(small(sr::TemporalMode::stack, 2), 0);
    sr::FrameWindow w({sr::Frame(torch::rand({3, 8, 8}), 4), sr::Frame(torch::rand({3, 8, 8}), 5)});
    const auto p = sr::forward(net, w, "m");
    EXPECT_EQ(p.source_index, 5);
    EXPECT_EQ(p.right_view.sizes(), torch::IntArrayRef({3, 8, 8}));
    EXPECT_NO_THROW(p.frame());
}
