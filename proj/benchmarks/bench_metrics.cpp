#include <benchmark/benchmark.h>

#include <torch/torch.h>

#include "stereorecon/features.hpp"
#include "stereorecon/metrics.hpp"

namespace sr = stereorecon;

namespace {

const sr::FeatureWeights& weights() {
    static const auto w = sr::FeatureWeights::seeded(0);
    return w;
}

void BM_Psnr(benchmark::State& state) {
    const auto a = torch::rand({3, 192, 384});
    const auto b = torch::rand({3, 192, 384});
    for (auto _ : state) benchmark::DoNotOptimize(sr::psnr(a, b));
}
BENCHMARK(BM_Psnr);

void BM_Ssim(benchmark::State& state) {
    torch::set_num_threads(1);
    const auto a = torch::rand({3, 192, 384});
    const auto b = torch::rand({3, 192, 384});
    for (auto _ : state) benchmark::DoNotOptimize(sr::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

void BM_Lpips(benchmark::State& state) {
    torch::set_num_threads(1);
    sr::Lpips lpips(weights(), sr::LpipsCalibration::uniform());
    const auto a = torch::rand({3, 192, 384});
    const auto b = torch::rand({3, 192, 384});
    for (auto _ : state) benchmark::DoNotOptimize(lpips(a, b));
}
BENCHMARK(BM_Lpips)->Unit(benchmark::kMillisecond);

void BM_Dists(benchmark::State& state) {
    torch::set_num_threads(1);
    sr::Dists dists(weights(), sr::DistsCalibration::uniform());
    const auto a = torch::rand({3, 192, 384});
    const auto b = torch::rand({3, 192, 384});
    for (auto _ : state) benchmark::DoNotOptimize(dists(a, b));
}
BENCHMARK(BM_Dists)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
    torch::set_num_threads(1);
    const auto n = state.range(0);
    const auto a = torch::randn({n, 512}, torch::kFloat64);
    const auto b = torch::randn({n, 512}, torch::kFloat64) + 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(sr::fid(a, b).value);
}
BENCHMARK(BM_Fid)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace
