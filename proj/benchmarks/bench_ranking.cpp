#include <benchmark/benchmark.h>

#include "stereorecon/ranking.hpp"
#include "stereorecon/study.hpp"

namespace sr = stereorecon;

namespace {

void BM_BradleyTerry(benchmark::State& state) {
    std::map<std::string, double> worths{{"target", 1.0}};
    std::vector<std::string> models;
    for (int i = 0; i < 8; ++i) {
        models.push_back("m" + std::to_string(i));
        worths[models.back()] = 0.3 + 0.2 * i;
    }
    const auto plan = sr::build_study_plan(models, {"e0", "e1", "e2"}, 1);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& q : plan.questions) pairs.emplace_back(q.item_a, q.item_b);
    const auto records = sr::simulate_comparisons(worths, pairs, state.range(0), 3);
    for (auto _ : state) benchmark::DoNotOptimize(sr::fit_bradley_terry(records, "target").log_likelihood);
    state.SetLabel(std::to_string(records.size()) + " records");
}
BENCHMARK(BM_BradleyTerry)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_StudyPlan(benchmark::State& state) {
    std::vector<std::string> models;
    for (int i = 0; i < state.range(0); ++i) models.push_back("m" + std::to_string(i));
    for (auto _ : state) benchmark::DoNotOptimize(sr::build_study_plan(models, {"e0", "e1", "e2"}, 1).questions.size());
}
BENCHMARK(BM_StudyPlan)->Arg(8)->Arg(32);

}  // namespace
