#include <benchmark/benchmark.h>

#include <vector>

#include "adarank/adapt.hpp"
#include "adarank/merge.hpp"
#include "adarank/nn.hpp"
#include "adarank/rng.hpp"
#include "adarank/spectral.hpp"
#include "adarank/tasks.hpp"

namespace {

adarank::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  adarank::Rng rng(seed);
  adarank::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Default-sized model with synthetic weights and streams; heavy enough that
// one step is dominated by the masked rebuild plus forward/backward passes.
struct Fixture {
  adarank::ModelSpec spec;
  adarank::WeightMap pretrained;
  adarank::SpectralSet set;
  std::vector<adarank::Matrix> heads;
  std::vector<adarank::UnlabeledStream> streams;

  Fixture() {
    spec.input_dim = 32;
    spec.hidden_dims = {64, 64};
    spec.classes_per_task = {4, 8, 12, 16};
    spec.activation = adarank::Activation::relu;
    pretrained = adarank::init_model(spec, 7).backbone;
    std::vector<adarank::WeightMap> finetuned;
    for (std::size_t t = 0; t < spec.num_tasks(); ++t) {
      adarank::WeightMap w;
      for (std::size_t l = 0; l < pretrained.size(); ++l) {
        const adarank::Matrix& base = pretrained.matrix(l);
        w.add(pretrained.name(l),
              base + 0.1 * random_matrix(base.rows(), base.cols(),
                                         adarank::Rng::mix(31, 10 * t + l)));
      }
      finetuned.push_back(std::move(w));
    }
    const auto vectors = adarank::build_task_vectors(
        finetuned, adarank::BaseKind::pretrained, &pretrained);
    set = adarank::decompose(vectors, false);
    for (std::size_t t = 0; t < spec.num_tasks(); ++t) {
      heads.push_back(adarank::init_head(spec, t, 8));
      adarank::Dataset fake;
      fake.inputs = random_matrix(64, spec.input_dim, adarank::Rng::mix(41, t));
      streams.push_back(adarank::make_stream(fake));
    }
  }
};

void BM_AdaptStep(benchmark::State& state) {
  const Fixture fx;
  const auto lambda =
      adarank::LambdaMap::uniform(fx.set.num_tasks(), fx.set.num_layers(), 0.3);
  const adarank::MaskState init =
      adarank::init_mask(adarank::InitPolicy::all_ones, fx.set, 10.0, lambda);
  adarank::AdaptSettings settings;
  settings.steps = static_cast<std::size_t>(state.range(0));
  settings.batch_size = 16;
  settings.seed = 99;
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::adapt(fx.spec, fx.pretrained, fx.set, fx.heads,
                                            fx.streams, init, adarank::AdamState{},
                                            settings));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MaskedRebuild(benchmark::State& state) {
  const Fixture fx;
  const auto lambda =
      adarank::LambdaMap::uniform(fx.set.num_tasks(), fx.set.num_layers(), 0.3);
  const adarank::MaskBits bits = adarank::full_mask(fx.set);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adarank::merge_masked(fx.pretrained, fx.set, bits, lambda));
  }
}

}  // namespace

BENCHMARK(BM_AdaptStep)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaskedRebuild)->Unit(benchmark::kMicrosecond);
