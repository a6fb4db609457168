#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atomflow/model.hpp"
#include "atomflow/nn/params.hpp"
#include "atomflow/train.hpp"

namespace atomflow {

enum class FinetuneTask { Properties, EnergyForces };
std::string_view to_string(FinetuneTask task) noexcept;
FinetuneTask parse_finetune_task(std::string_view text);

/// Per-target mean and standard deviation of the 19 property labels over a training split.
struct PropertyStats {
  std::vector<double> mean = std::vector<double>(kNumProperties, 0.0);
  std::vector<double> stddev = std::vector<double>(kNumProperties, 1.0);

  /// Targets with fewer than two labels keep std 1; spread below 1e-12 (relative to |mean|) is replaced by 1.
  static PropertyStats compute(std::span<const AtomicSystem> systems);
  double standardize(int k, double value) const { return (value - mean[static_cast<std::size_t>(k)]) / stddev[static_cast<std::size_t>(k)]; }
  double destandardize(int k, double value) const { return value * stddev[static_cast<std::size_t>(k)] + mean[static_cast<std::size_t>(k)]; }
};

struct FinetuneConfig {
  FinetuneTask task = FinetuneTask::Properties;
  int tap_layer = 16;
  double lambda_forces = 5.0;
  double t_floor = 0.98;
  double alpha_t = 1.8;
  PropertyStats stats;

  /// Task defaults: properties use t_floor 0.98, energy/forces 1.0.
  static FinetuneConfig defaults(FinetuneTask task, int tap_layer);
  void validate() const;
};

/// Trainable mask for the selected task: the auxiliary stacks of its heads train, every
/// embedding, trunk, denoising and other auxiliary tensor stays frozen. Raises
/// TapOutOfRange when the tap layer is outside the trunk, ConfigMismatch when it
/// differs from the model's tap.
template <typename T>
std::vector<bool> freeze_and_bind(const FlowTransformer<T>& model, const FinetuneConfig& config);

/// max(Beta(alpha_t, 1) draw, t_floor).
double finetune_time(RngStream& rng, const FinetuneConfig& config);

/// Mean absolute error over entries whose mask is nonzero. Raises AllMasked when none are.
double property_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const Eigen::MatrixXd& mask);

/// mean_b (e'_b - e_b)^2 + lambda mean_b (1/N_b) |F'_b - F_b|^2.
double energy_force_loss(std::span<const double> pred_energy, std::span<const double> target_energy,
                         std::span<const Coords> pred_forces, std::span<const Coords> target_forces,
                         double lambda_forces);

/// Standardized targets and availability mask (1 x 19 each) of one system.
std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> property_targets(const AtomicSystem& system,
                                                                   const PropertyStats& stats);

template <typename T>
struct FinetuneGradient {
  double loss = 0.0;
  std::vector<nn::Matrix<T>> grads;
};

/// Batch loss of the selected task (properties: masked MAE over the batch; energy/forces:
/// energy_force_loss) and its gradient with respect to trainable tensors only. Inputs are
/// noised to finetune_time draws from stream (seed, step, i).
template <typename T>
FinetuneGradient<T> finetune_gradient(const FlowTransformer<T>& model, const nn::ParameterStore<T>& params,
                                      const std::vector<bool>& trainable, std::span<const AtomicSystem> batch,
                                      const FinetuneConfig& config, std::uint64_t seed, std::uint64_t step);

struct FinetuneMetrics {
  double loss = 0.0;                     // task loss at t = 1
  double property_mae = 0.0;             // standardized, over labeled entries
  std::vector<double> per_target_mae;    // original units, NaN when a target has no labels
  double energy_mae = 0.0;
  double force_mae = 0.0;                // mean |component| error
};

/// Clean-input (t = 1) predictions scored against the labels.
template <typename T>
FinetuneMetrics evaluate_finetune(const FlowTransformer<T>& model, const nn::ParameterStore<T>& params,
                                  std::span<const AtomicSystem> systems, const FinetuneConfig& config);

struct FinetuneLoopOptions {
  int steps = 100;
  int batch_size = 16;
  int eval_every = 10;
  nn::AdamWOptions adam;
  std::uint64_t seed = 0;
};

struct FinetuneLogEntry {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

template <typename T>
struct FinetuneResult {
  nn::ParameterStore<T> last;
  nn::ParameterStore<T> best;  // lowest validation metric
  double best_metric = 0.0;
  std::int64_t best_step = 0;
  std::vector<FinetuneLogEntry> log;
};

/// Validation metric: standardized property MAE, or energy MAE + lambda force MAE.
double validation_metric(const FinetuneMetrics& m, const FinetuneConfig& config);

template <typename T>
FinetuneResult<T> finetune_loop(const FlowTransformer<T>& model, nn::ParameterStore<T> params,
                                std::span<const AtomicSystem> train, std::span<const AtomicSystem> val,
                                const FinetuneConfig& config, const FinetuneLoopOptions& options);

}  // namespace atomflow
