// OpenMP kernels against the serial reference on the layer shapes of the
// desk-scale model (16x16 images, base 16, batch 32).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dbigan/kernels.hpp"

namespace k = dbigan::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

k::ConvGeometry conv_geometry(std::size_t side, std::size_t in_c, std::size_t out_c, std::size_t kernel,
                              std::size_t stride, std::size_t padding) {
    k::ConvGeometry g;
    g.batch = 32;
    g.in_h = g.in_w = side;
    g.in_c = in_c;
    g.out_c = out_c;
    g.kernel = kernel;
    g.stride = stride;
    g.padding = padding;
    g.out_h = g.out_w = (side + 2 * padding - kernel) / stride + 1;
    return g;
}

// Arguments: side, in_c, out_c, kernel, stride.
k::ConvGeometry conv_from(const benchmark::State& st) {
    const auto kernel = static_cast<std::size_t>(st.range(3));
    return conv_geometry(st.range(0), st.range(1), st.range(2), kernel, st.range(4), 1);
}

template <bool Parallel>
void conv_forward(benchmark::State& st) {
    const auto g = conv_from(st);
    const auto x = noise(g.input_size(), 1), w = noise(g.weight_size(), 2), b = noise(g.out_c, 3);
    std::vector<double> y(g.output_size());
    for (auto _ : st) {
        if constexpr (Parallel) k::conv2d_forward(g, x, w, b, y);
        else k::reference::conv2d_forward(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void conv_backward(benchmark::State& st) {
    const auto g = conv_from(st);
    const auto x = noise(g.input_size(), 1), w = noise(g.weight_size(), 2), gy = noise(g.output_size(), 3);
    std::vector<double> gx(g.input_size()), gw(g.weight_size()), gb(g.out_c);
    for (auto _ : st) {
        if constexpr (Parallel) {
            k::conv2d_backward_input(g, gy, w, gx);
            k::conv2d_backward_params(g, x, gy, gw, gb);
        } else {
            k::reference::conv2d_backward_input(g, gy, w, gx);
            k::reference::conv2d_backward_params(g, x, gy, gw, gb);
        }
        benchmark::DoNotOptimize(gx.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

// Arguments: in, out.
template <bool Parallel>
void dense_forward(benchmark::State& st) {
    const k::DenseGeometry g{32, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1))};
    const auto x = noise(g.batch * g.in, 1), w = noise(g.in * g.out, 2), b = noise(g.out, 3);
    std::vector<double> y(g.batch * g.out);
    for (auto _ : st) {
        if constexpr (Parallel) k::dense_forward(g, x, w, b, y);
        else k::reference::dense_forward(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void dense_backward(benchmark::State& st) {
    const k::DenseGeometry g{32, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1))};
    const auto x = noise(g.batch * g.in, 1), w = noise(g.in * g.out, 2), gy = noise(g.batch * g.out, 3);
    std::vector<double> gx(g.batch * g.in), gw(g.in * g.out), gb(g.out);
    for (auto _ : st) {
        if constexpr (Parallel) {
            k::dense_backward_input(g, gy, w, gx);
            k::dense_backward_params(g, x, gy, gw, gb);
        } else {
            k::reference::dense_backward_input(g, gy, w, gx);
            k::reference::dense_backward_params(g, x, gy, gw, gb);
        }
        benchmark::DoNotOptimize(gx.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
    b->Args({16, 1, 8, 3, 1});   // encoder stem
    b->Args({16, 8, 16, 4, 2});  // encoder / discriminator downsampling
    b->Args({8, 16, 32, 4, 2});
    b->Unit(benchmark::kMicrosecond);
}

void dense_shapes(benchmark::internal::Benchmark* b) {
    b->Args({18, 128});   // generator input
    b->Args({512, 16});   // encoder head
    b->Args({1088, 128}); // discriminator joint layer
    b->Unit(benchmark::kMicrosecond);
}

} // namespace

BENCHMARK(conv_forward<true>)->Name("conv_forward/openmp")->Apply(conv_shapes);
BENCHMARK(conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_shapes);
BENCHMARK(conv_backward<true>)->Name("conv_backward/openmp")->Apply(conv_shapes);
BENCHMARK(conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_shapes);
BENCHMARK(dense_forward<true>)->Name("dense_forward/openmp")->Apply(dense_shapes);
BENCHMARK(dense_forward<false>)->Name("dense_forward/reference")->Apply(dense_shapes);
BENCHMARK(dense_backward<true>)->Name("dense_backward/openmp")->Apply(dense_shapes);
BENCHMARK(dense_backward<false>)->Name("dense_backward/reference")->Apply(dense_shapes);

BENCHMARK_MAIN();
