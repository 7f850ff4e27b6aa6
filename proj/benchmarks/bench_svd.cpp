#include <benchmark/benchmark.h>

#include "adarank/rng.hpp"
#include "adarank/spectral.hpp"

namespace {

adarank::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  adarank::Rng rng(seed);
  adarank::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void BM_SvdThin(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const adarank::Matrix a = random_matrix(rows, cols, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::svd_thin(a));
  }
  state.SetComplexityN(static_cast<std::int64_t>(rows * cols));
}

void BM_Reconstruct(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const adarank::ThinSvd f = adarank::svd_thin(random_matrix(rows, cols, 7));
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::reconstruct_all(f));
  }
}

}  // namespace

// Layer-sized shapes: folded-bias input layer, square hidden layer, wide head.
BENCHMARK(BM_SvdThin)->Args({33, 64})->Args({65, 64})->Args({128, 96});
BENCHMARK(BM_Reconstruct)->Args({33, 64})->Args({65, 64})->Args({128, 96});
