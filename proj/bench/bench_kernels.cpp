// Serial reference kernels against the OpenMP versions on shapes typical of
// the toy model. Set OMP_NUM_THREADS to compare scaling.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "teformer/kernels.hpp"

namespace k = teformer::kernels;

namespace {

std::vector<float> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  auto a = random_buffer(std::size_t(m) * m, 1), b = random_buffer(std::size_t(m) * m, 2);
  std::vector<float> c(std::size_t(m) * m);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gemm(false, false, m, m, m, a.data(), b.data(), c.data(), false);
    else
      k::reference::gemm(false, false, m, m, m, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(m) * m * m);
}

k::ConvGeometry conv_shape(int channels, int size, int groups) {
  k::ConvGeometry g;
  g.n = 2;
  g.cin = g.cout = channels;
  g.h = g.w = size;
  g.kh = g.kw = 3;
  g.pad_h = g.pad_w = 1;
  g.groups = groups;
  return g;
}

template <bool Parallel>
void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  const int groups = static_cast<int>(state.range(2));
  auto g = conv_shape(c, size, groups);
  auto x = random_buffer(std::size_t(g.n) * c * size * size, 3);
  auto w = random_buffer(std::size_t(c) * (c / groups) * 9, 4);
  std::vector<float> y(std::size_t(g.n) * c * g.hout() * g.wout());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
    else
      k::reference::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  auto g = conv_shape(c, size, 1);
  auto x = random_buffer(std::size_t(g.n) * c * size * size, 5);
  auto w = random_buffer(std::size_t(c) * c * 9, 6);
  auto gy = random_buffer(std::size_t(g.n) * c * size * size, 7);
  std::vector<float> gx(x.size()), gw(w.size()), gb(c);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_backward(g, x.data(), w.data(), gy.data(), gx.data(), gw.data(), gb.data());
    else
      k::reference::conv2d_backward(g, x.data(), w.data(), gy.data(), gx.data(), gw.data(), gb.data());
    benchmark::DoNotOptimize(gx.data());
  }
}

template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  k::SampleGeometry g;
  g.n = 2;
  g.c = static_cast<int>(state.range(0));
  g.h = g.w = static_cast<int>(state.range(1));
  g.scale = 2;
  auto x = random_buffer(std::size_t(g.n) * g.c * g.h * g.w, 8);
  auto off = random_buffer(std::size_t(g.n) * 2 * g.hout() * g.wout(), 9);
  std::vector<float> y(std::size_t(g.n) * g.c * g.hout() * g.wout());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::bilinear_forward(g, x.data(), off.data(), y.data());
    else
      k::reference::bilinear_forward(g, x.data(), off.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv3x3<false>)->Name("conv3x3/serial")->Args({32, 32, 1})->Args({64, 16, 64});
BENCHMARK(BM_Conv3x3<true>)->Name("conv3x3/omp")->Args({32, 32, 1})->Args({64, 16, 64});
BENCHMARK(BM_Conv3x3Backward<false>)->Name("conv3x3_bwd/serial")->Args({32, 32});
BENCHMARK(BM_Conv3x3Backward<true>)->Name("conv3x3_bwd/omp")->Args({32, 32});
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/serial")->Args({16, 32});
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/omp")->Args({16, 32});

BENCHMARK_MAIN();
