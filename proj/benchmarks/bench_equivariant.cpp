#include <benchmark/benchmark.h>

#include "atomflow/equivariant/group.hpp"
#include "atomflow/equivariant/layers.hpp"
#include "atomflow/rng.hpp"

namespace atomflow::equivariant {
namespace {

RegularMatrix random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  return RegularMatrix::NullaryExpr(r, c, [&] { return rng.normal(); });
}

// range(0): atoms, range(1): channels
void BM_GLinear(benchmark::State& state) {
  const auto group = build_group(GroupName::Tetrahedral);
  auto rng = RngStream::derive(1, {});
  const auto n = state.range(0), c = state.range(1);
  const RegularFeature f{n, group.order, random_matrix(n * group.order, c, rng)};
  const RegularMatrix w = random_matrix(group.order * c, c, rng);
  for (auto _ : state) {
    auto out = g_linear(f, w, group);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_GLinear)->Args({16, 8})->Args({16, 32})->Args({64, 32});

void BM_GLinearDense(benchmark::State& state) {
  const auto group = build_group(GroupName::Tetrahedral);
  auto rng = RngStream::derive(1, {});
  const auto n = state.range(0), c = state.range(1);
  const RegularFeature f{n, group.order, random_matrix(n * group.order, c, rng)};
  const RegularMatrix w = random_matrix(group.order * c, c, rng);
  for (auto _ : state) {
    auto out = g_linear_dense(f, w, group);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_GLinearDense)->Args({16, 8})->Args({16, 32})->Args({64, 32});

void BM_GAttention(benchmark::State& state) {
  const auto group = build_group(GroupName::Tetrahedral);
  auto rng = RngStream::derive(2, {});
  const auto n = state.range(0);
  const Eigen::Index c = 16;
  const RegularFeature f{n, group.order, random_matrix(n * group.order, c, rng)};
  GAttentionWeights w;
  for (auto* m : {&w.wq, &w.wk, &w.wv, &w.wo}) *m = random_matrix(group.order * c, c, rng) * 0.3;
  w.scale = RegularMatrix::Constant(1, 2, 1.0);
  for (auto _ : state) {
    auto out = g_attention(f, w, 2, group);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_GAttention)->Arg(8)->Arg(32);

}  // namespace
}  // namespace atomflow::equivariant
