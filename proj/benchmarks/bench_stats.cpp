#include <benchmark/benchmark.h>

#include <vector>

#include "tbench/rng.hpp"
#include "tbench/stats.hpp"

using namespace tbench;

namespace {

std::vector<double> rates(std::size_t n) {
    CounterRng rng(9, 0);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform();
    return v;
}

void BM_Bootstrap(benchmark::State& state) {
    const auto v = rates(10);
    for (auto _ : state) benchmark::DoNotOptimize(stratified_bootstrap(v, Metric::IQM, state.range(0)));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bootstrap)->Arg(1000)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_ConvergedRate(benchmark::State& state) {
    const auto curve = rates(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(converged_rate(curve, 50));
}
BENCHMARK(BM_ConvergedRate)->Arg(50)->Arg(2500);

}  // namespace

BENCHMARK_MAIN();
