#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "atomflow/equivariant/group.hpp"
#include "atomflow/errors.hpp"
#include "atomflow/nn/graph.hpp"
#include "atomflow/nn/ops.hpp"
#include "atomflow/nn/params.hpp"
#include "oracles.hpp"

namespace atomflow::nn {
namespace {

using M = Matrix<double>;
using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

M random(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.uniform() - 1.0;
  return m;
}

// Builds out = f(inputs), reduces it with a fixed random projection to a scalar, and checks
// every input gradient entry against central differences.
void check_gradients(std::vector<M> inputs, const Builder& f, double tol = 1e-6) {
  RngStream rng(1234);
  M proj;
  auto forward = [&](Graph<double>& g, std::vector<Var>& vars) {
    vars.clear();
    for (const auto& in : inputs) vars.push_back(g.input(in));
    const Var out = f(g, vars);
    const M& v = g.value(out);
    if (proj.size() == 0) proj = random(v.rows(), v.cols(), rng);
    // sum(proj * out) expressed as squared_error difference: ((out + proj)^2 - (out - proj)^2) / 4.
    const Var plus = squared_error(g, out, M(-proj), 4.0);
    const Var minus = squared_error(g, out, proj, 4.0);
    const std::array<Var, 2> terms = {plus, minus};
    const std::array<double, 2> w = {1.0, -1.0};
    return weighted_sum(g, std::span<const Var>(terms), std::span<const double>(w));
  };
  Graph<double> g;
  std::vector<Var> vars;
  const Var loss = forward(g, vars);
  g.backward(loss);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const M grad = g.grad(vars[k]).size() ? g.grad(vars[k]) : M::Zero(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data()[i];
      const double fd = testing::central_difference(
          [&] {
            Graph<double> h;
            std::vector<Var> hv;
            return h.scalar(forward(h, hv));
          },
          x, 1e-6);
      EXPECT_NEAR(grad.data()[i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << k << " entry " << i;
    }
  }
}

TEST(Ops, ElementwiseAndMatmul) {
  RngStream r(1);
  check_gradients({random(3, 4, r), random(3, 4, r)}, [](auto& g, const auto& v) { return add(g, v[0], v[1]); });
  check_gradients({random(3, 4, r), random(3, 4, r)}, [](auto& g, const auto& v) { return sub(g, v[0], v[1]); });
  check_gradients({random(3, 4, r), random(3, 4, r)}, [](auto& g, const auto& v) { return mul(g, v[0], v[1]); });
  check_gradients({random(3, 4, r)}, [](auto& g, const auto& v) { return scale(g, v[0], -2.5); });
  check_gradients({random(3, 4, r), random(4, 2, r)}, [](auto& g, const auto& v) { return matmul(g, v[0], v[1]); });
  check_gradients({random(3, 4, r), random(1, 4, r)}, [](auto& g, const auto& v) { return add_row(g, v[0], v[1]); });
  check_gradients({random(3, 4, r), random(4, 5, r), random(1, 5, r)},
                  [](auto& g, const auto& v) { return linear(g, v[0], v[1], v[2]); });
  check_gradients({random(3, 4, r)}, [](auto& g, const auto& v) { return silu(g, v[0]); });
}

TEST(Ops, NormalizationAndReshaping) {
  RngStream r(2);
  check_gradients({random(3, 6, r), random(1, 6, r), random(1, 6, r)},
                  [](auto& g, const auto& v) { return layer_norm(g, v[0], v[1], v[2]); });
  check_gradients({random(5, 3, r)}, [](auto& g, const auto& v) { return mean_rows(g, v[0]); });
  check_gradients({random(1, 3, r)}, [](auto& g, const auto& v) { return broadcast_rows(g, v[0], 4); });
  check_gradients({random(4, 3, r)}, [](auto& g, const auto& v) { return gather_rows(g, v[0], {3, 0, 0, 2, 1}); });
  check_gradients({random(2, 3, r)}, [](auto& g, const auto& v) { return repeat_rows(g, v[0], 3); });
  check_gradients({random(6, 3, r)}, [](auto& g, const auto& v) { return block_mean_rows(g, v[0], 3); });
}

TEST(Ops, AttentionPlainAndGrouped) {
  RngStream r(3);
  check_gradients({random(4, 6, r), random(5, 6, r), random(5, 6, r), random(1, 2, r)},
                  [](auto& g, const auto& v) { return attention(g, v[0], v[1], v[2], v[3], 2); });
  // Two tokens with three slots each.
  check_gradients({random(6, 4, r), random(6, 4, r), random(6, 4, r), random(1, 2, r)},
                  [](auto& g, const auto& v) { return attention(g, v[0], v[1], v[2], v[3], 2, 3); });
}

TEST(Ops, Losses) {
  RngStream r(4);
  const std::vector<int> targets = {2, 0, 4};
  check_gradients({random(3, 5, r)}, [&](auto& g, const auto& v) {
    return cross_entropy(g, v[0], std::span<const int>(targets));
  });
  M target = random(3, 4, r), mask = M::Ones(3, 4);
  mask(1, 2) = 0.0;
  mask(0, 0) = 0.0;
  check_gradients({random(3, 4, r)}, [&](auto& g, const auto& v) {
    return masked_abs_error(g, v[0], target, mask, 10.0);
  });
}

TEST(Ops, MaskedEntriesGetZeroGradient) {
  RngStream r(5);
  Graph<double> g;
  const Var x = g.input(random(2, 3, r));
  M mask = M::Ones(2, 3);
  mask(0, 1) = 0.0;
  const Var loss = masked_abs_error(g, x, M(M::Zero(2, 3)), mask, 1.0);
  g.backward(loss);
  EXPECT_EQ(g.grad(x)(0, 1), 0.0);
  EXPECT_NE(g.grad(x)(0, 0), 0.0);
}

TEST(Ops, GroupLinearAndProjection) {
  RngStream r(6);
  const auto group = equivariant::build_group(equivariant::GroupName::Tetrahedral);
  const int order = group.order;
  check_gradients({random(2 * order, 3, r), random(order * 3, 2, r)}, [&](auto& g, const auto& v) {
    return group_linear(g, v[0], v[1], group.cayley);
  });
  check_gradients({random(2 * order, 3, r)}, [&](auto& g, const auto& v) {
    return group_vector_project(g, v[0], group.rotations);
  });
}

TEST(Graph, FrozenParameterHasNoGradient) {
  M w = M::Constant(2, 2, 0.5);
  M sink = M::Zero(2, 2);
  Graph<double> g;
  const Var x = g.input(M::Ones(1, 2));
  const Var frozen = g.parameter(w, nullptr);
  const Var live = g.parameter(w, &sink);
  const Var y = add(g, matmul(g, x, frozen), matmul(g, x, live));
  g.backward(squared_error(g, y, M(M::Zero(1, 2)), 1.0));
  EXPECT_FALSE(g.requires_grad(frozen));
  EXPECT_GT(sink.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Graph, BackwardNeedsScalarRoot) {
  Graph<double> g;
  const Var x = g.input(M::Ones(2, 2));
  EXPECT_THROW(g.backward(scale(g, x, 2.0)), Error);
}

TEST(Params, AdamFirstStepIsSignTimesLr) {
  ParameterLayout layout;
  layout.add("a", 2, 2);
  layout.add("b", 1, 3);
  ParameterStore<double> p(layout);
  p.value(0) = M::Constant(2, 2, 1.0);
  p.value(1) = M::Constant(1, 3, 1.0);
  AdamWOptions opt;
  opt.lr = 0.01;
  AdamW<double> adam(p, opt);
  std::vector<M> grads = {M::Constant(2, 2, 3.0), M::Constant(1, 3, -2.0)};
  const std::vector<bool> trainable = {true, false};
  adam.step(p, grads, &trainable);
  EXPECT_NEAR(p.value(0)(0, 0), 1.0 - 0.01, 1e-9);
  EXPECT_EQ(p.value(1), M::Constant(1, 3, 1.0));
}

TEST(Params, EmaWarmupThenDecay) {
  ParameterLayout layout;
  layout.add("a", 1, 1);
  ParameterStore<double> p(layout);
  p.value(0)(0, 0) = 0.0;
  Ema<double> ema(p, 0.999);
  EXPECT_DOUBLE_EQ(ema.effective_decay(), 0.1);
  p.value(0)(0, 0) = 1.0;
  ema.update(p);
  EXPECT_DOUBLE_EQ(ema.shadow().value(0)(0, 0), 0.9);
  for (int i = 0; i < 100000; ++i) ema.update(p);
  EXPECT_DOUBLE_EQ(ema.effective_decay(), 0.999);
}

TEST(Params, LayoutRejectsDuplicates) {
  ParameterLayout layout;
  layout.add("a", 1, 1);
  EXPECT_THROW(layout.add("a", 2, 2), Error);
  EXPECT_THROW(layout.index("missing"), Error);
}

}  // namespace
}  // namespace atomflow::nn
