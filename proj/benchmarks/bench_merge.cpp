#include <benchmark/benchmark.h>

#include <vector>

#include "adarank/merge.hpp"
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

struct Fixture {
  adarank::WeightMap pretrained;
  adarank::TaskVectorSet vectors;
  adarank::SpectralSet set;

  explicit Fixture(std::size_t num_tasks) {
    pretrained.add("layers.0", random_matrix(33, 64, 900));
    pretrained.add("layers.1", random_matrix(65, 64, 901));
    std::vector<adarank::WeightMap> finetuned;
    for (std::size_t t = 0; t < num_tasks; ++t) {
      adarank::WeightMap w;
      for (std::size_t l = 0; l < pretrained.size(); ++l) {
        const adarank::Matrix& base = pretrained.matrix(l);
        w.add(pretrained.name(l),
              base + 0.3 * random_matrix(base.rows(), base.cols(),
                                         adarank::Rng::mix(17, 10 * t + l)));
      }
      finetuned.push_back(std::move(w));
    }
    vectors = adarank::build_task_vectors(finetuned, adarank::BaseKind::pretrained,
                                          &pretrained);
    set = adarank::decompose(vectors, false);
  }
};

void BM_TaskArithmetic(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  const auto lambda =
      adarank::LambdaMap::uniform(fx.set.num_tasks(), fx.set.num_layers(), 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        adarank::merge_task_arithmetic(fx.pretrained, fx.vectors, lambda));
  }
}

void BM_MaskedMerge(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  const auto lambda =
      adarank::LambdaMap::uniform(fx.set.num_tasks(), fx.set.num_layers(), 0.3);
  const adarank::MaskBits bits = adarank::full_mask(fx.set);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::merge_masked(fx.pretrained, fx.set, bits, lambda));
  }
}

void BM_TopkMerge(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)));
  const auto lambda =
      adarank::LambdaMap::uniform(fx.set.num_tasks(), fx.set.num_layers(), 2.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::merge_topk(
        fx.pretrained, fx.set, 0.16, adarank::TopkRankRule::fraction, lambda));
  }
}

}  // namespace

BENCHMARK(BM_TaskArithmetic)->Arg(4)->Arg(8);
BENCHMARK(BM_MaskedMerge)->Arg(4)->Arg(8);
BENCHMARK(BM_TopkMerge)->Arg(4)->Arg(8);
