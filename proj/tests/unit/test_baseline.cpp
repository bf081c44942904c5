#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stereorecon/baseline.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/synthetic.hpp"

namespace sr = stereorecon;

namespace {

// out[c] = in[c - delta]; vacated columns are zero or the original pixels.
torch::Tensor loop_shift(const torch::Tensor& in, std::int64_t delta, bool copy) {
    const auto w = in.size(2);
    auto out = copy ? in.clone() : torch::zeros_like(in);
    for (std::int64_t c = 0; c < w; ++c) {
        const auto src = c - delta;
        if (src >= 0 && src < w) out.select(2, c).copy_(in.select(2, src));
    }
    return out;
}

}  // namespace

TEST(ShiftFrame, MatchesColumnLoopForBothFills) {
    const auto img = oracle::random_image(3, 5, 11);
    for (std::int64_t d : {-11, -4, -1, 0, 2, 7, 11}) {
        EXPECT_TRUE(torch::equal(sr::shift_frame(img, d, sr::FillPolicy::zeros), loop_shift(img, d, false))) << d;
        EXPECT_TRUE(torch::equal(sr::shift_frame(img, d, sr::FillPolicy::copy_original), loop_shift(img, d, true)))
            << d;
    }
    EXPECT_THROW(sr::shift_frame(img, 12, sr::FillPolicy::zeros), sr::ConfigError);
}

TEST(FitShift, RecoversSyntheticDisparity) {
    for (std::int64_t d : {-9, 0, 6}) {
        sr::SyntheticSceneSpec spec;
        spec.num_frames = 2;
        spec.height = 24;
        spec.width = 48;
        spec.true_disparity = d;
        spec.texture_seed = 12;
        const auto scene = sr::generate_synthetic_stereo(spec);
        const std::vector<std::int64_t> idx{0, 1};
        const auto fit = sr::fit_shift(scene, idx, sr::LossFunction::mse(), sr::FillPolicy::zeros);
        EXPECT_EQ(fit.delta, d);
        EXPECT_EQ(fit.loss_curve.size(), 97u);
        EXPECT_NEAR(fit.loss_value, 0.0, 1e-12);
        const auto copy = sr::fit_shift(scene, idx, sr::LossFunction::mse(), sr::FillPolicy::copy_original);
        if (d == 0) EXPECT_EQ(copy.delta, 0);
        EXPECT_LE(copy.loss_value, sr::shift_loss(scene, idx, d, sr::FillPolicy::copy_original, sr::LossFunction::mse()));
    }
}

TEST(FitShift, TiesPreferSmallestMagnitudeThenNegative) {
    // A constant image makes every copy-fill shift equally good.
    sr::InMemoryStereo flat;
    flat.push_back(torch::full({3, 4, 8}, 0.5), torch::full({3, 4, 8}, 0.5));
    const std::vector<std::int64_t> idx{0};
    EXPECT_EQ(sr::fit_shift(flat, idx, sr::LossFunction::mse(), sr::FillPolicy::copy_original).delta, 0);
    sr::ShiftFitOptions opts;
    opts.min_delta = -3;
    opts.max_delta = -1;
    EXPECT_EQ(sr::fit_shift(flat, idx, sr::LossFunction::mse(), sr::FillPolicy::copy_original, opts).delta, -1);
    opts.min_delta = -2;
    opts.max_delta = 2;
    // Exclude 0 by making the right view differ only where a shift of +-1 helps equally.
    sr::InMemoryStereo sym;
    auto left = torch::zeros({3, 1, 8});
    left.select(2, 4).fill_(1.0);
    auto right = torch::zeros({3, 1, 8});
    right.select(2, 3).fill_(0.5);
    right.select(2, 5).fill_(0.5);
    sym.push_back(left, right);
    EXPECT_EQ(sr::fit_shift(sym, idx, sr::LossFunction::mse(), sr::FillPolicy::zeros, opts).delta, -1);
}

TEST(FitShift, ReportsDegenerateFullWidthShift) {
    sr::InMemoryStereo dark;
    dark.push_back(oracle::random_image(1, 4, 6), torch::zeros({3, 4, 6}));
    const std::vector<std::int64_t> idx{0};
    const auto fit = sr::fit_shift(dark, idx, sr::LossFunction::mse(), sr::FillPolicy::zeros);
    EXPECT_TRUE(fit.degenerate(6));
    EXPECT_EQ(std::llabs(fit.delta), 6);
}

TEST(FitShift, EmptyInputAndStride) {
    sr::SyntheticSceneSpec spec;
    spec.num_frames = 6;
    spec.height = 12;
    spec.width = 24;
    spec.true_disparity = -3;
    spec.motion_x = 1;
    const auto scene = sr::generate_synthetic_stereo(spec);
    const std::vector<std::int64_t> none;
    EXPECT_THROW(sr::fit_shift(scene, none, sr::LossFunction::mse(), sr::FillPolicy::zeros), sr::DataError);
    const std::vector<std::int64_t> idx{0, 1, 2, 3, 4, 5};
    sr::ShiftFitOptions opts;
    opts.stride = 3;
    const auto fit = sr::fit_shift(scene, idx, sr::LossFunction::mae(), sr::FillPolicy::copy_original, opts);
    EXPECT_EQ(fit.delta, -3);
    EXPECT_NEAR(fit.loss_value,
                sr::shift_loss(scene, idx, -3, sr::FillPolicy::copy_original, sr::LossFunction::mae()), 1e-12);
    const auto j = sr::to_json(fit);
    EXPECT_EQ(j.at("delta").get<std::int64_t>(), -3);
}
