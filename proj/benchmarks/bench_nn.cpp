#include <benchmark/benchmark.h>

#include <random>

#include "dkamc/dataset.hpp"
#include "dkamc/layers.hpp"
#include "dkamc/models.hpp"
#include "dkamc/signal.hpp"

using namespace dkamc;

namespace {

Tensor<float> randn(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d;
    Tensor<float> t(shape);
    for (float& v : t.data()) v = d(rng);
    return t;
}

// The widest convolution in the visual model: 32 -> 32 channels, kernel 7, 64 samples.
void BM_Conv1dForward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Conv1DSpec spec{32, 32, 7, 1, Padding::Same};
    const auto x = randn({batch, 32, 64}, 1);
    const auto w = randn({32, 32, 7}, 2);
    const Tensor<float> b({32});
    for (auto _ : state) benchmark::DoNotOptimize(conv1d_forward(x, spec, w, b));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(64);

void BM_Conv1dBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Conv1DSpec spec{32, 32, 7, 1, Padding::Same};
    const auto x = randn({batch, 32, 64}, 1);
    const auto w = randn({32, 32, 7}, 2);
    const auto up = randn({batch, 32, 64}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv1d_backward(up, x, spec, w));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dBackward)->Arg(1)->Arg(64);

void BM_VisualTrainStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    VisualModel<float> m(4);
    m.init(1);
    const auto x = randn({batch, 2, 128}, 4);
    const auto g = randn({batch, 4}, 5);
    for (auto _ : state) {
        m.forward(x);
        m.backward(g);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VisualTrainStep)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_VisualInfer(benchmark::State& state) {
    VisualModel<float> m(4);
    m.init(1);
    const auto x = randn({2, 128}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(m.infer(x));
}
BENCHMARK(BM_VisualInfer)->Unit(benchmark::kMicrosecond);

void BM_AttributeTrainStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    AttributeModel<float> m;
    m.init(1);
    const auto x = randn({batch, 2, 128}, 4);
    const auto g = randn({batch, 6}, 5);
    for (auto _ : state) {
        m.forward(x, Mode::Train);
        m.backward(g);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AttributeTrainStep)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_SynthesizeFrame(benchmark::State& state) {
    ChannelConfig cfg;
    std::uint64_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(synthesize_frame(cfg, Modulation::QAM16, 10, i++));
}
BENCHMARK(BM_SynthesizeFrame)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
