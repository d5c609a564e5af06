#include <benchmark/benchmark.h>

#include "tbench/nn.hpp"
#include "tbench/ppo.hpp"

using namespace tbench;

namespace {

// MPL config-1 observation (12 + 139) into the default 64x64x64 policy.
constexpr int kObs = 151;
constexpr int kAct = 7;

Mlp make_policy() {
    CounterRng rng(1, streams::kActorInit);
    return Mlp({kObs, 64, 64, 64, kAct}, OutputActivation::TANH, rng);
}

Eigen::MatrixXd inputs(Eigen::Index batch) {
    CounterRng rng(2, 0);
    Eigen::MatrixXd x(kObs, batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return x;
}

void BM_MlpForward(benchmark::State& state) {
    const auto net = make_policy();
    const auto x = inputs(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(64)->Arg(1000);

void BM_MlpForwardBackward(benchmark::State& state) {
    const auto net = make_policy();
    const auto x = inputs(state.range(0));
    const Eigen::MatrixXd up = Eigen::MatrixXd::Ones(kAct, state.range(0));
    for (auto _ : state) {
        MlpCache cache;
        net.forward_batch(x, &cache);
        benchmark::DoNotOptimize(net.backward(cache, up));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(1000);

void BM_AdamStep(benchmark::State& state) {
    auto net = make_policy();
    Adam opt(net, 3e-4);
    MlpCache cache;
    net.forward_batch(inputs(64), &cache);
    const auto grads = net.backward(cache, Eigen::MatrixXd::Ones(kAct, 64));
    for (auto _ : state) opt.step(net, grads);
}
BENCHMARK(BM_AdamStep);

void BM_Gae(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    CounterRng rng(3, 0);
    std::vector<double> r(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = rng.normal();
        v[i] = rng.normal();
    }
    for (auto _ : state) benchmark::DoNotOptimize(compute_gae(r, v, 0.0, 0.99, 0.97));
}
BENCHMARK(BM_Gae)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
