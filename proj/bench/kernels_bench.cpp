// Serial reference vs OpenMP kernel, same inputs. Set OMP_NUM_THREADS to compare.
#include <benchmark/benchmark.h>

#include "rewardkit/attn_diag.hpp"
#include "rewardkit/bench_eval.hpp"
#include "rewardkit/reward_agg.hpp"
#include "rewardkit/rng.hpp"
#include "../tests/support.hpp"

using namespace rewardkit;

namespace {

agg::GridSearchSpec grid_spec(std::size_t pairs) {
    Rng rng(1);
    agg::GridSearchSpec spec;
    auto u = [&] { return 25.0 * rng.uniform01(); };
    for (std::size_t i = 0; i < pairs; ++i) spec.validation.push_back({{u(), u(), u(), u()}, {u(), u(), u(), u()}});
    return spec;
}

void BM_GridSearch_Serial(benchmark::State& state) {
    const auto spec = grid_spec(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(agg::serial::grid_search(spec));
    state.SetItemsProcessed(state.iterations() * 64 * state.range(0));
}

void BM_GridSearch_Parallel(benchmark::State& state) {
    const auto spec = grid_spec(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(agg::grid_search(spec));
    state.SetItemsProcessed(state.iterations() * 64 * state.range(0));
}

struct BenchInput {
    std::vector<bench::EvalGroup> groups;
    bench::PredictedScores scores;
};

BenchInput bench_input(std::size_t per_size) {
    const auto pool = fixtures::bench_pool(200);
    BenchInput in;
    in.groups = bench::compose_groups(pool, {per_size, per_size, per_size}, 3);
    in.scores = fixtures::oracle_scores(pool);
    return in;
}

void BM_Benchmark_Serial(benchmark::State& state) {
    const auto in = bench_input(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(bench::serial::evaluate_benchmark(in.groups, in.scores));
    state.SetItemsProcessed(state.iterations() * 3 * state.range(0));
}

void BM_Benchmark_Parallel(benchmark::State& state) {
    const auto in = bench_input(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(bench::evaluate_benchmark(in.groups, in.scores));
    state.SetItemsProcessed(state.iterations() * 3 * state.range(0));
}

std::vector<attn::AttentionGrid> grids(std::size_t n) {
    std::vector<attn::AttentionGrid> out;
    for (const auto& p : fixtures::collapsed_corpus(n, 4)) out.push_back(p.source);
    return out;
}

void BM_Correlation_Serial(benchmark::State& state) {
    const auto g = grids(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(attn::serial::inter_sample_correlation(g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * (state.range(0) - 1) / 2);
}

void BM_Correlation_Parallel(benchmark::State& state) {
    const auto g = grids(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(attn::inter_sample_correlation(g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * (state.range(0) - 1) / 2);
}

}  // namespace

BENCHMARK(BM_GridSearch_Serial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GridSearch_Parallel)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Benchmark_Serial)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Benchmark_Parallel)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Correlation_Serial)->Arg(100)->Arg(776)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Correlation_Parallel)->Arg(100)->Arg(776)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
