#include <benchmark/benchmark.h>

#include "atomflow/model.hpp"
#include "atomflow/sampler.hpp"
#include "systems.hpp"

namespace atomflow {
namespace {

void BM_DiscreteStep(benchmark::State& state) {
  const auto atoms = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Index k = 100;
  auto rng = RngStream::derive(1, {});
  Eigen::MatrixXd probs = Eigen::MatrixXd::NullaryExpr(atoms, k, [&] { return rng.uniform(); });
  probs = probs.array().colwise() / probs.rowwise().sum().array();
  std::vector<int> types(static_cast<std::size_t>(atoms));
  for (auto& t : types) t = static_cast<int>(rng.next_u64() % k);
  for (auto _ : state) {
    auto next = discrete_flow_step(types, probs, 0.5, 0.01, rng);
    benchmark::DoNotOptimize(next);
  }
}
BENCHMARK(BM_DiscreteStep)->Arg(16)->Arg(128);

void BM_EuclideanStep(benchmark::State& state) {
  const auto atoms = static_cast<Eigen::Index>(state.range(0));
  auto rng = RngStream::derive(2, {});
  const Eigen::MatrixXd z = Eigen::MatrixXd::NullaryExpr(atoms, 3, [&] { return rng.normal(); });
  const Eigen::MatrixXd pred = Eigen::MatrixXd::NullaryExpr(atoms, 3, [&] { return rng.normal(); });
  SampleSchedule schedule;
  const auto g = [&](double t) { return schedule.g(t); };
  for (auto _ : state) {
    auto next = euclidean_step(z, pred, 0.5, 0.01, schedule.gamma, g, rng);
    benchmark::DoNotOptimize(next);
  }
}
BENCHMARK(BM_EuclideanStep)->Arg(16)->Arg(128);

void BM_Generate(benchmark::State& state) {
  TftConfig c;
  c.d_model = 32;
  c.num_trunk_layers = 2;
  c.num_heads = 4;
  c.num_aux_layers = 1;
  c.tap_layer = 2;
  c.time_embed_dim = 32;
  const FlowTransformer<float> model(c);
  nn::ParameterStore<float> params(model.layout());
  auto rng = RngStream::derive(1, {});
  model.init_parameters(params, rng);
  const ModelPredictor<float> predictor(model, params);
  SampleRequest req;
  req.domain = state.range(0) == 0 ? DomainClass::Molecule : DomainClass::Material;
  req.num_atoms = 8;
  req.batch_size = 4;
  req.schedule.num_steps = 50;
  for (auto _ : state) {
    auto out = generate(predictor, req);
    benchmark::DoNotOptimize(out.systems);
  }
  state.SetItemsProcessed(state.iterations() * req.batch_size);
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace atomflow
