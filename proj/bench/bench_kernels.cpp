// OpenMP kernels against the serial reference on the desk encoder's shapes.
//
//   OMP_NUM_THREADS=4 ./bench_kernels --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>
#include <vector>

#include "pairlearn/kernels.hpp"
#include "pairlearn/model.hpp"

namespace k = pairlearn::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

// stem, stage-1 block, stage-2 projection, stage-3 block
const k::ConvShape kShapes[] = {
    {3, 8, 64, 64, 3, 2, 1},
    {8, 8, 16, 16, 3, 1, 1},
    {8, 16, 16, 16, 1, 2, 0},
    {32, 32, 4, 4, 3, 1, 1},
};

void set_counters(benchmark::State& state, const k::ConvShape& s) {
  const double macs = static_cast<double>(s.weight_size()) * s.out_height() * s.out_width();
  state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
  state.counters["threads"] = omp_get_max_threads();
}

template <bool Parallel>
void conv_forward(benchmark::State& state) {
  const auto& s = kShapes[state.range(0)];
  const auto x = noise(s.input_size(), 1), w = noise(s.weight_size(), 2), b = noise(s.out_channels, 3);
  std::vector<double> y(s.output_size());
  for (auto _ : state) {
    if constexpr (Parallel) k::conv2d_forward(s, x, w, b, y);
    else k::serial::conv2d_forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  set_counters(state, s);
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  const auto& s = kShapes[state.range(0)];
  const auto x = noise(s.input_size(), 1), w = noise(s.weight_size(), 2), go = noise(s.output_size(), 3);
  std::vector<double> dx(x.size()), dw(w.size()), db(s.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_backward_input(s, go, w, dx);
      k::conv2d_backward_params(s, x, go, dw, db);
    } else {
      k::serial::conv2d_backward_input(s, go, w, dx);
      k::serial::conv2d_backward_params(s, x, go, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
  set_counters(state, s);
}

template <bool Parallel>
void dense(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = noise(n, 1), w = noise(static_cast<std::size_t>(n) * n, 2), b = noise(n, 3);
  std::vector<double> y(n), dx(n), dw(w.size()), db(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::dense_forward(n, n, x, w, b, y);
      k::dense_backward(n, n, x, w, y, dx, dw, db);
    } else {
      k::serial::dense_forward(n, n, x, w, b, y);
      k::serial::dense_backward(n, n, x, w, y, dx, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void map_norm(benchmark::State& state) {
  const int c = 8, plane = 32 * 32;
  const auto x = noise(c * plane, 1), g = noise(c, 2), b = noise(c, 3), dy = noise(c * plane, 4);
  std::vector<double> xh(x.size()), y(x.size()), dx(x.size()), dg(c), dbeta(c);
  for (auto _ : state) {
    if constexpr (Parallel) {
      const double inv = k::map_norm_forward(c, plane, x, g, b, xh, y);
      k::map_norm_backward(c, plane, xh, inv, g, dy, dx, dg, dbeta);
    } else {
      const double inv = k::serial::map_norm_forward(c, plane, x, g, b, xh, y);
      k::serial::map_norm_backward(c, plane, xh, inv, g, dy, dx, dg, dbeta);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

// One forward and backward pass of the whole desk encoder on a 64x64 half.
void encoder_step(benchmark::State& state) {
  const auto params = pairlearn::init_params(pairlearn::desk_encoder(1));
  const pairlearn::SiameseNet net(params.config);
  const auto input = noise(3 * 64 * 64, 5);
  const std::vector<double> d_latent(params.config.projection_dim, 0.01);
  std::vector<double> grad(params.size());
  for (auto _ : state) {
    const auto cache = net.forward(params, input);
    net.backward(params, cache, 0.1, d_latent, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(conv_forward<true>)->Name("conv_forward/omp")->DenseRange(0, 3);
BENCHMARK(conv_forward<false>)->Name("conv_forward/serial")->DenseRange(0, 3);
BENCHMARK(conv_backward<true>)->Name("conv_backward/omp")->DenseRange(0, 3);
BENCHMARK(conv_backward<false>)->Name("conv_backward/serial")->DenseRange(0, 3);
BENCHMARK(dense<true>)->Name("dense/omp")->Arg(128)->Arg(512);
BENCHMARK(dense<false>)->Name("dense/serial")->Arg(128)->Arg(512);
BENCHMARK(map_norm<true>)->Name("map_norm/omp");
BENCHMARK(map_norm<false>)->Name("map_norm/serial");
BENCHMARK(encoder_step)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
