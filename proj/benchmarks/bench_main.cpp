#include <benchmark/benchmark.h>

#include "caunet/network.hpp"
#include "caunet/tensor.hpp"

using namespace caunet;

namespace {

Tensor<float> random_input(int n, int c, int h, int w, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<float> v(static_cast<std::size_t>(n) * c * h * w);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    return Tensor<float>({n, c, h, w}, std::move(v), false);
}

void BM_Conv2d3x3(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    RngStream rng(1);
    auto x = random_input(1, c, hw, hw, 2);
    std::vector<float> wv(static_cast<std::size_t>(c) * c * 9);
    for (auto& v : wv) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    Tensor<float> w({c, c, 3, 3}, std::move(wv), false);
    Tensor<float> b = Tensor<float>::zeros({c}, false);
    NoGradGuard guard;
    for (auto _ : state) {
        auto y = conv2d(x, w, b, ConvSpec{3, 3, 1, 1, 1});
        benchmark::DoNotOptimize(y.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2ll * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 64})->Args({32, 64})->Args({64, 32});

void BM_ForwardEval(benchmark::State& state) {
    NetworkConfig cfg;
    cfg.depth = static_cast<int>(state.range(0));
    RngStream rng(3);
    auto net = build<float>(cfg, rng);
    auto x = random_input(1, 3, 128, 128, 4);
    for (auto _ : state) {
        auto y = forward_eval(net, x);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_ForwardEval)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ForwardTrain(benchmark::State& state) {
    NetworkConfig cfg;
    cfg.depth = 2;
    RngStream rng(5);
    auto net = build<float>(cfg, rng);
    auto x = random_input(4, 3, 64, 64, 6);
    for (auto _ : state) {
        RngStream drop(7);
        auto y = forward(net, x, true, 0.5, &drop);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_ForwardTrain)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
