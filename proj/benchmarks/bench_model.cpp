#include <benchmark/benchmark.h>

#include "atomflow/flow.hpp"
#include "atomflow/model.hpp"
#include "atomflow/train.hpp"
#include "systems.hpp"

namespace atomflow {
namespace {

TftConfig config_for(int width) {
  TftConfig c;
  c.d_model = width;
  c.num_trunk_layers = 4;
  c.num_heads = 4;
  c.num_aux_layers = 1;
  c.tap_layer = 4;
  c.time_embed_dim = width;
  return c;
}

template <typename T>
void BM_Predict(benchmark::State& state) {
  const FlowTransformer<T> model(config_for(static_cast<int>(state.range(0))));
  nn::ParameterStore<T> params(model.layout());
  auto rng = RngStream::derive(1, {});
  model.init_parameters(params, rng);
  const auto systems = bench::random_systems(2, static_cast<int>(state.range(1)), 2);
  const auto batch = build_training_batch(systems, 1, 1.8, model.config().vocab(), 3, 0);
  for (auto _ : state) {
    auto out = model.predict(params, batch[0], ClassLabel::Molecule);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Predict<float>)->Args({64, 8})->Args({64, 32})->Args({128, 32});
BENCHMARK(BM_Predict<double>)->Args({64, 8});

void BM_BatchGradient(benchmark::State& state) {
  const FlowTransformer<float> model(config_for(static_cast<int>(state.range(0))));
  nn::ParameterStore<float> params(model.layout());
  auto rng = RngStream::derive(1, {});
  model.init_parameters(params, rng);
  const auto systems = bench::random_systems(8, 8, 4);
  const auto batch = build_training_batch(systems, 1, 1.8, model.config().vocab(), 5, 0);
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto g = batch_gradient(model, params, batch, LossWeights{}, 6, step++);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_BatchGradient)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace atomflow
