#include <benchmark/benchmark.h>

#include <numeric>

#include <torch/torch.h>

#include "stereorecon/baseline.hpp"
#include "stereorecon/features.hpp"
#include "stereorecon/loss.hpp"
#include "stereorecon/model.hpp"
#include "stereorecon/synthetic.hpp"

namespace sr = stereorecon;

namespace {

sr::ModelConfig config_for(std::int64_t mode, std::int64_t k) {
    sr::ModelConfig c;
    c.temporal_mode = static_cast<sr::TemporalMode>(mode);
    c.frames = c.temporal_mode == sr::TemporalMode::single ? 1 : k;
    c.base_channels = 16;
    return c;
}

// Args: temporal mode (0 single, 1 stack, 2 spatio-temporal), K.
void BM_Forward(benchmark::State& state) {
    torch::set_num_threads(1);
    torch::NoGradGuard no_grad;
    const auto config = config_for(state.range(0), state.range(1));
    auto net = sr::build_model(config, 0);
    net->eval();
    const auto input = torch::rand({1, config.frames, 3, 96, 192});
    for (auto _ : state) benchmark::DoNotOptimize(net->forward(input));
    state.SetLabel(sr::to_string(config.temporal_mode) + " K=" + std::to_string(config.frames));
}
BENCHMARK(BM_Forward)->Args({0, 1})->Args({1, 5})->Args({2, 5})->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    torch::set_num_threads(1);
    const auto config = config_for(state.range(0), state.range(1));
    auto net = sr::build_model(config, 0);
    torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(1e-4));
    const auto input = torch::rand({2, config.frames, 3, 64, 128});
    const auto target = torch::rand({2, 3, 64, 128});
    for (auto _ : state) {
        adam.zero_grad();
        auto loss = sr::mse_loss(net->forward(input), target);
        loss.backward();
        adam.step();
    }
}
BENCHMARK(BM_TrainStep)->Args({0, 1})->Args({2, 5})->Unit(benchmark::kMillisecond);

void BM_PerceptualLoss(benchmark::State& state) {
    torch::set_num_threads(1);
    sr::PerceptualLoss loss(sr::FeatureWeights::seeded(0));
    const auto pred = torch::rand({2, 3, 96, 192}, torch::requires_grad());
    const auto target = torch::rand({2, 3, 96, 192});
    for (auto _ : state) {
        auto l = loss(pred, target);
        l.backward();
        benchmark::DoNotOptimize(pred.grad());
    }
}
BENCHMARK(BM_PerceptualLoss)->Unit(benchmark::kMillisecond);

void BM_FitShift(benchmark::State& state) {
    torch::set_num_threads(1);
    sr::SyntheticSceneSpec spec;
    spec.num_frames = 8;
    spec.height = 96;
    spec.width = 192;
    spec.true_disparity = -12;
    spec.motion_x = 2;
    const auto scene = sr::generate_synthetic_stereo(spec);
    std::vector<std::int64_t> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    const auto mse = sr::LossFunction::mse();
    for (auto _ : state)
        benchmark::DoNotOptimize(sr::fit_shift(scene, idx, mse, sr::FillPolicy::copy_original).delta);
}
BENCHMARK(BM_FitShift)->Unit(benchmark::kMillisecond);

}  // namespace
