#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <functional>
#include <vector>

#include "atomflow/errors.hpp"
#include "atomflow/model.hpp"
#include "atomflow/train.hpp"
#include "toy_systems.hpp"

namespace atomflow {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::IoError;
}

TftConfig small() {
  TftConfig c;
  c.d_model = 16;
  c.num_trunk_layers = 2;
  c.num_heads = 2;
  c.num_aux_layers = 1;
  c.tap_layer = 2;
  c.time_embed_dim = 16;
  return c;
}

template <typename T>
nn::ParameterStore<T> init(const FlowTransformer<T>& m, std::uint64_t seed) {
  nn::ParameterStore<T> p(m.layout());
  auto rng = RngStream::derive(seed, {});
  m.init_parameters(p, rng);
  return p;
}

TrainConfig train_config(std::uint64_t seed) {
  TrainConfig c;
  c.copies = 2;
  c.adam.lr = 1e-3;
  c.seed = seed;
  return c;
}

TEST(Chunks, CoverRangeInOrder) {
  for (std::size_t count : {1u, 5u, 16u, 17u})
    for (int chunks : {1, 2, 3, 8, 40}) {
      std::vector<int> owner(count, -1);
      int last_chunk = -1;
      std::size_t next = 0;
      for_each_chunk(count, chunks, [&](std::size_t b, std::size_t e, int c) {
        EXPECT_EQ(b, next);
        EXPECT_GT(c, last_chunk);
        for (std::size_t i = b; i < e; ++i) owner[i] = c;
        next = e;
        last_chunk = c;
      });
      EXPECT_EQ(next, count);
      for (int o : owner) EXPECT_GE(o, 0);
    }
}

TEST(Parallel, DeterministicModeUsesOneChunk) {
  ParallelOptions o{4, true};
  EXPECT_EQ(o.chunks(), 1);
  o.deterministic = false;
  EXPECT_EQ(o.chunks(), 4);
  ::setenv("ATOMFLOW_THREADS", "3", 1);
  ::setenv("ATOMFLOW_DETERMINISTIC", "0", 1);
  const auto env = ParallelOptions::from_env();
  EXPECT_EQ(env.threads, 3);
  EXPECT_FALSE(env.deterministic);
  ::setenv("ATOMFLOW_THREADS", "many", 1);
  EXPECT_EQ(kind_of([] { ParallelOptions::from_env(); }), ErrorKind::ConfigError);
  ::unsetenv("ATOMFLOW_THREADS");
  ::unsetenv("ATOMFLOW_DETERMINISTIC");
}

TEST(BatchGradient, ChunkedSumMatchesSerial) {
  const FlowTransformer<double> model(small());
  const auto params = init(model, 1);
  const auto systems = testing::toy_systems();
  const auto batch = build_training_batch(systems, 2, 1.8, AtomVocab{model.num_atom_types()}, 3, 0);
  const auto serial = batch_gradient(model, params, batch, LossWeights{}, 5, 0, ParallelOptions{1, true});
  const auto again = batch_gradient(model, params, batch, LossWeights{}, 5, 0, ParallelOptions{1, true});
  const auto chunked = batch_gradient(model, params, batch, LossWeights{}, 5, 0, ParallelOptions{3, false});
  EXPECT_EQ(serial.loss, again.loss);
  EXPECT_NEAR(serial.loss, chunked.loss, 1e-12 * std::abs(serial.loss));
  for (std::size_t i = 0; i < serial.grads.size(); ++i) {
    EXPECT_TRUE(serial.grads[i] == again.grads[i]);
    EXPECT_LE((serial.grads[i] - chunked.grads[i]).cwiseAbs().maxCoeff(),
              1e-10 * (1.0 + serial.grads[i].cwiseAbs().maxCoeff()));
  }
  EXPECT_EQ(kind_of([&] { batch_gradient<double>(model, params, {}, LossWeights{}, 5, 0); }), ErrorKind::EmptyBatch);
}

TEST(TrainConfig, Validation) {
  auto c = train_config(0);
  EXPECT_NO_THROW(c.validate());
  c.copies = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::ConfigError);
  c = train_config(0);
  c.ema_decay = 1.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::ConfigError);
  c = train_config(0);
  c.adam.lr = 0.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::ConfigError);
  c = train_config(0);
  c.grad_clip = -1.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::ConfigError);
}

TEST(Trainer, SameSeedIsBitIdenticalDifferentSeedIsNot) {
  const FlowTransformer<float> model(small());
  const auto systems = testing::toy_systems();
  Trainer<float> a(model, init(model, 2), train_config(11), ParallelOptions{1, true});
  Trainer<float> b(model, init(model, 2), train_config(11), ParallelOptions{1, true});
  Trainer<float> c(model, init(model, 2), train_config(12), ParallelOptions{1, true});
  for (int i = 0; i < 5; ++i) {
    const auto ra = a.step(systems);
    const auto rb = b.step(systems);
    c.step(systems);
    EXPECT_EQ(ra.loss, rb.loss);
    EXPECT_EQ(ra.step, i + 1);
  }
  EXPECT_TRUE(a.params().bitwise_equal(b.params()));
  EXPECT_TRUE(a.ema_params().bitwise_equal(b.ema_params()));
  EXPECT_FALSE(a.params().bitwise_equal(c.params()));
  EXPECT_EQ(a.steps_taken(), 5);
}

TEST(Trainer, EmaFollowsWarmupRecursion) {
  const FlowTransformer<double> model(small());
  const auto systems = testing::toy_systems();
  auto cfg = train_config(4);
  cfg.ema_decay = 0.9;
  Trainer<double> t(model, init(model, 3), cfg, ParallelOptions{1, true});
  auto shadow = t.params();
  for (int n = 0; n < 12; ++n) {
    t.step(systems);
    const double d = std::min(0.9, (1.0 + n) / (10.0 + n));
    for (std::size_t i = 0; i < shadow.size(); ++i) shadow.value(i) = d * shadow.value(i) + (1.0 - d) * t.params().value(i);
  }
  for (std::size_t i = 0; i < shadow.size(); ++i)
    EXPECT_LE((shadow.value(i) - t.ema_params().value(i)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_FALSE(t.ema_params().bitwise_equal(t.params()));
}

TEST(Trainer, ValidationUsesEmaAndIsDeterministic) {
  const FlowTransformer<double> model(small());
  const auto systems = testing::toy_systems();
  auto cfg = train_config(5);
  cfg.adam.lr = 1e-2;
  Trainer<double> t(model, init(model, 6), cfg, ParallelOptions{1, true});
  const double before = t.validation_loss(systems, 99, 2);
  EXPECT_EQ(before, t.validation_loss(systems, 99, 2));
  for (int i = 0; i < 30; ++i) t.step(systems);
  const double after = t.validation_loss(systems, 99, 2);
  EXPECT_LT(after, before);

  // EMA parameters drive validation: a trainer started from the EMA weights with decay 0
  // reports the same loss before stepping.
  auto cfg0 = cfg;
  cfg0.ema_decay = 0.0;
  Trainer<double> from_ema(model, t.ema_params(), cfg0, ParallelOptions{1, true});
  EXPECT_EQ(from_ema.validation_loss(systems, 99, 2), after);
}

TEST(Trainer, GradientClipBoundsUpdate) {
  const FlowTransformer<double> model(small());
  const auto systems = testing::toy_systems();
  auto cfg = train_config(8);
  cfg.grad_clip = 1e-3;
  Trainer<double> t(model, init(model, 1), cfg, ParallelOptions{1, true});
  const auto r = t.step(systems);
  EXPECT_GT(r.grad_norm, 1e-3);
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Trainer, RejectsForeignParameterStore) {
  const FlowTransformer<float> model(small());
  auto other_cfg = small();
  other_cfg.num_trunk_layers = 3;
  const FlowTransformer<float> other(other_cfg);
  EXPECT_EQ(kind_of([&] { Trainer<float>(model, init(other, 1), train_config(0), ParallelOptions{1, true}); }),
            ErrorKind::ConfigMismatch);
}

}  // namespace
}  // namespace atomflow
