#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "atomflow/denoiser.hpp"
#include "atomflow/flow.hpp"
#include "atomflow/nn/params.hpp"

namespace atomflow {

/// Worker layout for batch gradients. Items are split into `chunks` contiguous ranges whose
/// gradients are summed in range order, so results depend on the chunk count only.
struct ParallelOptions {
  int threads = 1;
  bool deterministic = true;

  /// Reads ATOMFLOW_THREADS and ATOMFLOW_DETERMINISTIC (1/0). Deterministic mode forces one chunk.
  static ParallelOptions from_env();
  int chunks() const { return deterministic ? 1 : (threads < 1 ? 1 : threads); }
};

/// Runs fn(begin, end, chunk) over `chunks` contiguous ranges of [0, count).
void for_each_chunk(std::size_t count, int chunks, const std::function<void(std::size_t, std::size_t, int)>& fn);

template <typename T>
struct BatchGradient {
  double loss = 0.0;      // mean over items of beta(t) L_total
  LossBreakdown mean;     // per-term means
  std::vector<nn::Matrix<T>> grads;
};

/// Mean-over-batch loss and parameter gradients. Item i drops its class label using the
/// stream (seed, step, i).
template <typename T>
BatchGradient<T> batch_gradient(const Denoiser<T>& model, const nn::ParameterStore<T>& params,
                                std::span<const FlowState> batch, const LossWeights& weights, std::uint64_t seed,
                                std::uint64_t step, const ParallelOptions& parallel = {},
                                bool class_dropout = true);

struct TrainConfig {
  LossWeights loss;
  int copies = 8;
  nn::AdamWOptions adam;
  double ema_decay = 0.999;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepReport {
  std::int64_t step = 0;
  double loss = 0.0;
  LossBreakdown mean;
  double grad_norm = 0.0;
};

/// Pretraining driver: augmented noised copies, AdamW update, EMA tracking.
template <typename T>
class Trainer {
 public:
  Trainer(const Denoiser<T>& model, nn::ParameterStore<T> params, TrainConfig config,
          ParallelOptions parallel = ParallelOptions::from_env());

  StepReport step(std::span<const AtomicSystem> systems);
  /// Mean weighted loss of the EMA parameters on fixed-seed noised copies (no dropout).
  double validation_loss(std::span<const AtomicSystem> systems, std::uint64_t seed, int copies = 1) const;

  const nn::ParameterStore<T>& params() const { return params_; }
  const nn::ParameterStore<T>& ema_params() const { return ema_.shadow(); }
  std::int64_t steps_taken() const { return step_; }
  const TrainConfig& config() const { return config_; }

 private:
  const Denoiser<T>& model_;
  nn::ParameterStore<T> params_;
  TrainConfig config_;
  ParallelOptions parallel_;
  nn::AdamW<T> optimizer_;
  nn::Ema<T> ema_;
  std::int64_t step_ = 0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace atomflow
