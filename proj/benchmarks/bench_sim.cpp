#include <benchmark/benchmark.h>

#include "tbench/grasp_sim.hpp"
#include "tbench/rng.hpp"
#include "tbench/sensor_layout.hpp"

using namespace tbench;

namespace {

void BM_SimStep(benchmark::State& state) {
    const auto config = static_cast<int>(state.range(0));
    const GraspSim sim(SimParams::mpl(), build_layout(config, HandProfile::mpl()), RunType::MAIN);
    CounterRng rng(5, 0);
    std::vector<double> action(7);
    auto [s, o] = sim.reset(0);
    for (auto _ : state) {
        for (double& a : action) a = rng.uniform(-1.0, 1.0);
        auto r = sim.step(s, action);
        s = r.state.phase == Phase::TERMINAL ? sim.reset(rng.next_u64()).first : r.state;
        benchmark::DoNotOptimize(r.observation.values.data());
    }
}
BENCHMARK(BM_SimStep)->DenseRange(1, 6);

void BM_Activation(benchmark::State& state) {
    const auto layout = build_layout(1, HandProfile::mpl());
    std::vector<SurfacePoint> contacts;
    for (int f = 0; f < kFingerCount; ++f) contacts.push_back({PadId::phalanx_pad(f, 2), Eigen::Vector2d(1.0, 0.5)});
    contacts.push_back({PadId::palm(), Eigen::Vector2d::Zero()});
    for (auto _ : state) benchmark::DoNotOptimize(activation(layout, contacts));
}
BENCHMARK(BM_Activation);

}  // namespace

BENCHMARK_MAIN();
