#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "convad/nn/kernels.hpp"

using namespace convad::nn;

namespace {

std::vector<float> filled(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> d;
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Block shapes of the default backbone: input of block b.
Shape3 block_input(int b) {
    static const Shape3 shapes[] = {{3, 128, 128}, {8, 64, 64}, {16, 32, 32}, {32, 16, 16}};
    return shapes[b];
}
int block_out(int b) {
    static const int c[] = {8, 16, 32, 64};
    return c[b];
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    const Shape3 is = block_input(b);
    const int oc = block_out(b);
    auto in = filled(is.size(), 1);
    auto w = filled(static_cast<std::size_t>(oc) * is.c * 9, 2);
    std::vector<float> bias(oc, 0.f), out(conv3x3_output_shape(is, oc, 2).size());
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::conv3x3_forward(in.data(), is, w.data(), bias.data(), oc, 2, out.data());
        else
            reference::conv3x3_forward(in.data(), is, w.data(), bias.data(), oc, 2, out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
    const int b = static_cast<int>(state.range(0));
    const Shape3 is = block_input(b);
    const int oc = block_out(b);
    const Shape3 os = conv3x3_output_shape(is, oc, 2);
    auto in = filled(is.size(), 1);
    auto w = filled(static_cast<std::size_t>(oc) * is.c * 9, 2);
    auto go = filled(os.size(), 3);
    std::vector<float> gw(w.size()), gb(oc), gi(is.size());
    for (auto _ : state) {
        if constexpr (Parallel) {
            kernels::conv3x3_backward_weights(in.data(), is, go.data(), os, 2, gw.data(), gb.data());
            kernels::conv3x3_backward_input(go.data(), os, w.data(), is, 2, gi.data());
        } else {
            reference::conv3x3_backward_weights(in.data(), is, go.data(), os, 2, gw.data(), gb.data());
            reference::conv3x3_backward_input(go.data(), os, w.data(), is, 2, gi.data());
        }
        benchmark::DoNotOptimize(gi.data());
    }
}

template <bool Parallel>
void BM_FeatureDistance(benchmark::State& state) {
    const Shape3 s{static_cast<int>(state.range(0)), 32, 32};
    auto a = filled(s.size(), 1);
    auto b = filled(s.size(), 2);
    std::vector<float> out(s.plane());
    for (auto _ : state) {
        if constexpr (Parallel)
            kernels::normalized_sq_distance(a.data(), b.data(), s, out.data());
        else
            reference::normalized_sq_distance(a.data(), b.data(), s, out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->DenseRange(0, 3);
BENCHMARK(BM_ConvForward<false>)->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<true>)->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<false>)->DenseRange(0, 3);
BENCHMARK(BM_FeatureDistance<true>)->Arg(16)->Arg(64);
BENCHMARK(BM_FeatureDistance<false>)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
