#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "stereorecon/checkpoint.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/synthetic.hpp"
#include "stereorecon/trainer.hpp"

namespace sr = stereorecon;

namespace {

sr::TrainRecipe small_recipe() {
    sr::TrainRecipe r;
    r.model.frames = 2;
    r.model.depth = 3;
    r.model.base_channels = 4;
    r.model.temporal_mode = sr::TemporalMode::stack;
    r.loss = sr::LossKind::mse;
    r.learning_rate = 1e-3;
    r.batch_size = 3;
    r.max_steps = 6;
    r.seed = 7;
    return r;
}

sr::InMemoryStereo scene() {
    sr::SyntheticSceneSpec spec;
    spec.num_frames = 12;
    spec.height = 16;
    spec.width = 24;
    spec.true_disparity = -3;
    spec.motion_x = 1;
    return sr::generate_synthetic_stereo(spec);
}

sr::DatasetSplit split() { return sr::make_splits(12, 4, 0.67, 1); }

std::vector<float> parameters(sr::StereoUNet& net) {
    std::vector<float> out;
    for (const auto& p : net->parameters()) {
        auto flat = p.detach().flatten().contiguous();
        out.insert(out.end(), flat.data_ptr<float>(), flat.data_ptr<float>() + flat.numel());
    }
    return out;
}

}  // namespace

TEST(TrainRecipe, JsonRoundTripAndValidation) {
    auto r = small_recipe();
    r.precision = sr::Precision::mixed16;
    r.repeat_current_frame = true;
    const nlohmann::json j = r;
    const auto back = j.get<sr::TrainRecipe>();
    EXPECT_TRUE(sr::recipe_differences(r, back).empty());
    EXPECT_EQ(back.max_steps, r.max_steps);

    auto bad = r;
    bad.learning_rate = 0;
    EXPECT_THROW(bad.validate(), sr::ConfigError);
    bad = r;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), sr::ConfigError);
    EXPECT_THROW(sr::parse_precision("fp8"), sr::ConfigError);

    auto other = r;
    other.seed = 8;
    other.model.frames = 3;
    other.max_steps = 99;
    const auto diffs = sr::recipe_differences(r, other);
    ASSERT_EQ(diffs.size(), 2u);
}

TEST(Trainer, DeterministicAndLogsMetrics) {
    oracle::TempDir dir("train");
    const auto frames = scene();
    sr::Trainer a(small_recipe(), frames, split(), sr::LossFunction::mse(), dir.path() / "a");
    sr::Trainer b(small_recipe(), frames, split(), sr::LossFunction::mse(), dir.path() / "b");
    const auto sa = a.run();
    const auto sb = b.run();
    EXPECT_EQ(sa.step_losses, sb.step_losses);
    EXPECT_EQ(parameters(a.network()), parameters(b.network()));
    EXPECT_EQ(sa.final_step, 6);
    EXPECT_TRUE(std::filesystem::exists(sa.final_checkpoint / sr::kModelFile));

    std::ifstream log(dir.path() / "a" / "metrics.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "step,split,loss_name,value,wall_time");
    int train_rows = 0;
    int validation_rows = 0;
    for (std::string line; std::getline(log, line);) {
        if (line.find(",train,mse,") != std::string::npos) ++train_rows;
        if (line.find(",validation,mse,") != std::string::npos) ++validation_rows;
    }
    EXPECT_EQ(train_rows, 6);
    EXPECT_EQ(validation_rows, 6 / a.steps_per_epoch());
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
    oracle::TempDir dir("train");
    const auto frames = scene();
    sr::Trainer full(small_recipe(), frames, split(), sr::LossFunction::mse(), dir.path() / "full");
    const auto whole = full.run();

    auto first_half = small_recipe();
    first_half.max_steps = 3;
    sr::Trainer part(first_half, frames, split(), sr::LossFunction::mse(), dir.path() / "part");
    const auto checkpoint = part.run().final_checkpoint;
    auto resumed = sr::Trainer::resume(checkpoint, small_recipe(), frames, split(), sr::LossFunction::mse(),
                                       dir.path() / "resumed");
    EXPECT_EQ(resumed.step(), 3);
    const auto rest = resumed.run();
    ASSERT_EQ(rest.step_losses.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(rest.step_losses[i], whole.step_losses[i + 3]);
    const auto pa = parameters(full.network());
    const auto pb = parameters(resumed.network());
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) ASSERT_NEAR(pa[i], pb[i], 1e-6);
}

TEST(Trainer, ResumeRefusesOtherRecipe) {
    oracle::TempDir dir("train");
    const auto frames = scene();
    sr::Trainer t(small_recipe(), frames, split(), sr::LossFunction::mse(), dir.path() / "t");
    const auto checkpoint = t.run().final_checkpoint;
    auto other = small_recipe();
    other.learning_rate = 5e-4;
    try {
        sr::Trainer::resume(checkpoint, other, frames, split(), sr::LossFunction::mse(), dir.path() / "r");
        FAIL();
    } catch (const sr::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos) << e.what();
    }
}

TEST(Trainer, EvaluateAndConfigChecks) {
    oracle::TempDir dir("train");
    const auto frames = scene();
    sr::Trainer t(small_recipe(), frames, split(), sr::LossFunction::mse(), dir.path() / "t");
    const double before = t.evaluate(sr::SplitPart::train);
    EXPECT_GT(before, 0.0);
    EXPECT_EQ(t.evaluate(sr::SplitPart::train), before);
    EXPECT_THROW(sr::Trainer(small_recipe(), frames, split(), sr::LossFunction::mae(), dir.path() / "x"), sr::ConfigError);
    auto recipe = small_recipe();
    recipe.model.frames = 5;  // longer than a 4-frame chunk
    EXPECT_THROW(sr::Trainer(recipe, frames, split(), sr::LossFunction::mse(), dir.path() / "y"), sr::Error);
}
