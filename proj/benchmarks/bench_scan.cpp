// Microbenchmarks for the hot kernels: the selective scan (expected to scale
// linearly in sequence length) and the im2col+GEMM convolution.

#include <benchmark/benchmark.h>

#include "ldg/vssm.hpp"

namespace {

ldg::Tensor<float> rand_tensor(ldg::Shape shape, std::uint64_t seed, double lo,
                               double hi) {
  ldg::Rng rng(seed);
  std::vector<float> d(static_cast<std::size_t>(ldg::numel_of(shape)));
  for (auto& v : d) v = static_cast<float>(rng.uniform(lo, hi));
  return ldg::Tensor<float>::from_data(std::move(shape), std::move(d));
}

// scan time should grow ~linearly with L (informational, not asserted)
void BM_SelectiveScan(benchmark::State& state) {
  std::int64_t L = state.range(0), N = 8, C = 16;
  auto x = rand_tensor({1, L, C}, 1, -1, 1);
  auto delta = rand_tensor({1, L, C}, 2, 0.01, 0.1);
  auto B = rand_tensor({1, L, N}, 3, -1, 1);
  auto Cm = rand_tensor({1, L, N}, 4, -1, 1);
  auto A = rand_tensor({C, N}, 5, -2, -0.5);
  auto D = rand_tensor({C}, 6, 0.5, 1.5);
  ldg::NoGradGuard ng;
  for (auto _ : state) {
    auto y = ldg::selective_scan(x, delta, B, Cm, A, D);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetComplexityN(L);
}
BENCHMARK(BM_SelectiveScan)->RangeMultiplier(2)->Range(256, 4096)->Complexity();

void BM_SS2D(benchmark::State& state) {
  std::int64_t hw = state.range(0);
  ldg::SS2D<float> scan(16, 8, "bench", 7);
  auto x = rand_tensor({1, 16, hw, hw}, 8, -1, 1);
  ldg::NoGradGuard ng;
  for (auto _ : state) {
    auto y = scan.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_SS2D)->Arg(16)->Arg(32)->Arg(64);

void BM_Conv3x3(benchmark::State& state) {
  std::int64_t c = state.range(0);
  ldg::Conv2dSpec sp{.in_ch = c, .out_ch = c, .kh = 3, .kw = 3, .padding = 1};
  ldg::Conv2d<float> conv(sp, "bench", 9);
  auto x = rand_tensor({1, c, 64, 64}, 10, -1, 1);
  ldg::NoGradGuard ng;
  for (auto _ : state) {
    auto y = conv.forward(x);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
