#include <benchmark/benchmark.h>

#include <random>

#include "dadet/kernels.hpp"
#include "dadet/layers.hpp"

using namespace dadet;

namespace {

Tensor filled(Shape s, Rng& rng) {
    Tensor t(s);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : t.span()) v = u(rng);
    return t;
}

// Args: batch, in channels, out channels, side, stride.
struct Case {
    Tensor x, w, b, gy;
    ConvGeometry g;
};

Case make_case(const benchmark::State& state) {
    Rng rng = make_rng(1, 0);
    const int n = static_cast<int>(state.range(0)), ci = static_cast<int>(state.range(1));
    const int co = static_cast<int>(state.range(2)), side = static_cast<int>(state.range(3));
    const ConvGeometry g{3, static_cast<int>(state.range(4)), 1};
    Case c{filled({n, ci, side, side}, rng), filled({co, ci, 3, 3}, rng), filled({1, co, 1, 1}, rng), Tensor(), g};
    c.gy = filled({n, co, g.out_extent(side), g.out_extent(side)}, rng);
    return c;
}

void set_flops(benchmark::State& state, const Case& c) {
    const double macs = static_cast<double>(c.gy.size()) * c.x.c() * 9;
    state.counters["GMAC/s"] = benchmark::Counter(macs * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardFast(benchmark::State& state) {
    const Case c = make_case(state);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(c.x, c.w, c.b, c.g));
    set_flops(state, c);
}

void BM_ConvForwardReference(benchmark::State& state) {
    const Case c = make_case(state);
    for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_forward(c.x, c.w, c.b, c.g));
    set_flops(state, c);
}

void BM_ConvBackwardFast(benchmark::State& state) {
    const Case c = make_case(state);
    Tensor wg(c.w.shape()), bg(c.b.shape());
    for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_backward(c.x, c.w, c.gy, c.g, wg, bg));
    set_flops(state, c);
}

void BM_ConvBackwardReference(benchmark::State& state) {
    const Case c = make_case(state);
    Tensor wg(c.w.shape()), bg(c.b.shape());
    for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_backward(c.x, c.w, c.gy, c.g, wg, bg));
    set_flops(state, c);
}

// Desk-scale stem, a mid stage and the deepest stage.
void shapes(benchmark::internal::Benchmark* b) {
    b->Args({16, 3, 8, 64, 2})->Args({16, 32, 32, 8, 1})->Args({16, 64, 128, 4, 2})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForwardFast)->Apply(shapes);
BENCHMARK(BM_ConvForwardReference)->Apply(shapes);
BENCHMARK(BM_ConvBackwardFast)->Apply(shapes);
BENCHMARK(BM_ConvBackwardReference)->Apply(shapes);

BENCHMARK_MAIN();
