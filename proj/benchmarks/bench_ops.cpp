// Microbenchmarks for the hot kernels: 2D/1D convolution, normalization, and
// the attention block, at shapes representative of the generator body.
#include <benchmark/benchmark.h>

#include <vsr/ops.hpp>
#include <vsr/rng.hpp>

using namespace vsr;

namespace {

VarT<float> rand_leaf(std::vector<int64_t> shape, uint64_t seed, bool requires_grad) {
  Rng rng(seed);
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-1.0, 1.0));
  return leaf(std::move(t), requires_grad);
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
  auto x = rand_leaf({5, 36, 32, 32}, 1, false);
  auto w = rand_leaf({36, 36, 3, 3}, 2, false);
  auto b = rand_leaf({36}, 3, false);
  for (auto _ : state) {
    auto y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_Conv2dForward)->Unit(benchmark::kMillisecond);

static void BM_Conv2dForwardBackward(benchmark::State& state) {
  for (auto _ : state) {
    auto x = rand_leaf({5, 36, 32, 32}, 1, true);
    auto w = rand_leaf({36, 36, 3, 3}, 2, true);
    auto b = rand_leaf({36}, 3, true);
    auto y = sum_all(conv2d(x, w, b, 1, 1));
    backward(y);
    benchmark::DoNotOptimize(w->grad.data.data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Unit(benchmark::kMillisecond);

static void BM_Conv1dTimeForward(benchmark::State& state) {
  auto x = rand_leaf({5, 36, 32, 32}, 4, false);
  auto w = rand_leaf({36, 36, 3}, 5, false);
  auto b = rand_leaf({36}, 6, false);
  for (auto _ : state) {
    auto y = conv1d_time(x, w, b, 5);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_Conv1dTimeForward)->Unit(benchmark::kMillisecond);

static void BM_GroupNormForward(benchmark::State& state) {
  auto x = rand_leaf({5, 36, 32, 32}, 7, false);
  auto g = rand_leaf({36}, 8, false);
  auto b = rand_leaf({36}, 9, false);
  for (auto _ : state) {
    auto y = group_norm(x, g, b, 4, 1e-5);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_GroupNormForward)->Unit(benchmark::kMillisecond);

static void BM_TemporalAttentionForward(benchmark::State& state) {
  auto x = rand_leaf({5, 24, 16, 16}, 10, false);
  auto wq = rand_leaf({24, 24}, 11, false);
  auto wk = rand_leaf({24, 24}, 12, false);
  auto wv = rand_leaf({24, 24}, 13, false);
  auto wo = rand_leaf({24, 24}, 14, false);
  for (auto _ : state) {
    auto y = temporal_attention(x, wq, wk, wv, wo, 5);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_TemporalAttentionForward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
