#include "atomflow/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "atomflow/errors.hpp"
#include "atomflow/nn/ops.hpp"

namespace atomflow {

std::string_view to_string(FinetuneTask task) noexcept {
  return task == FinetuneTask::Properties ? "properties" : "energy_forces";
}

FinetuneTask parse_finetune_task(std::string_view text) {
  if (text == "properties") return FinetuneTask::Properties;
  if (text == "energy_forces") return FinetuneTask::EnergyForces;
  fail(ErrorKind::ConfigError, "unknown finetune task '" + std::string(text) + "'");
}

PropertyStats PropertyStats::compute(std::span<const AtomicSystem> systems) {
  PropertyStats s;
  for (int k = 0; k < kNumProperties; ++k) {
    std::vector<double> values;
    for (const auto& sys : systems) {
      if (!sys.labels.properties) continue;
      const auto& v = (*sys.labels.properties)[static_cast<std::size_t>(k)];
      if (v) values.push_back(*v);
    }
    const auto ks = static_cast<std::size_t>(k);
    const auto n = static_cast<double>(values.size());
    if (values.empty()) continue;
    s.mean[ks] = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) continue;
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean[ks]) * (v - s.mean[ks]);
    const double sd = std::sqrt(sq / (n - 1.0));
    s.stddev[ks] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[ks])) ? sd : 1.0;
  }
  return s;
}

FinetuneConfig FinetuneConfig::defaults(FinetuneTask task, int tap_layer) {
  FinetuneConfig c;
  c.task = task;
  c.tap_layer = tap_layer;
  c.t_floor = task == FinetuneTask::Properties ? 0.98 : 1.0;
  return c;
}

void FinetuneConfig::validate() const {
  if (!(t_floor >= 0.0 && t_floor <= 1.0)) fail(ErrorKind::ConfigError, "t_floor must lie in [0, 1]");
  if (!(lambda_forces >= 0.0)) fail(ErrorKind::ConfigError, "lambda_forces must be >= 0");
  if (!(alpha_t > 0.0)) fail(ErrorKind::ConfigError, "alpha_t must be > 0");
  if (tap_layer < 1) fail(ErrorKind::TapOutOfRange, "tap_layer must be >= 1");
  if (stats.mean.size() != kNumProperties || stats.stddev.size() != kNumProperties)
    fail(ErrorKind::ConfigError, "property statistics must hold 19 entries");
}

template <typename T>
std::vector<bool> freeze_and_bind(const FlowTransformer<T>& model, const FinetuneConfig& config) {
  config.validate();
  const int layers = model.config().num_trunk_layers;
  if (config.tap_layer > layers)
    fail(ErrorKind::TapOutOfRange, "tap layer " + std::to_string(config.tap_layer) + " exceeds the " +
                                       std::to_string(layers) + "-layer trunk");
  if (config.tap_layer != model.config().tap_layer)
    fail(ErrorKind::ConfigMismatch, "finetune tap layer " + std::to_string(config.tap_layer) +
                                        " differs from the model tap layer " +
                                        std::to_string(model.config().tap_layer));
  std::vector<bool> mask;
  for (const auto& spec : model.layout().specs()) {
    bool train = false;
    if (config.task == FinetuneTask::Properties) {
      train = model.is_aux_tensor(spec.name, AuxHead::Props);
    } else {
      train = model.is_aux_tensor(spec.name, AuxHead::Energy) || model.is_aux_tensor(spec.name, AuxHead::Forces);
    }
    mask.push_back(train);
  }
  return mask;
}

double finetune_time(RngStream& rng, const FinetuneConfig& config) {
  return std::max(sample_time(rng, config.alpha_t), config.t_floor);
}

double property_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const Eigen::MatrixXd& mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || mask.rows() != pred.rows() ||
      mask.cols() != pred.cols())
    fail(ErrorKind::ShapeError, "property_loss: shapes differ");
  double count = 0.0, sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    sum += std::abs(pred.data()[i] - target.data()[i]);
    count += 1.0;
  }
  if (count == 0.0) fail(ErrorKind::AllMasked, "property_loss: every entry is masked");
  return sum / count;
}

double energy_force_loss(std::span<const double> pred_energy, std::span<const double> target_energy,
                         std::span<const Coords> pred_forces, std::span<const Coords> target_forces,
                         double lambda_forces) {
  const std::size_t b = pred_energy.size();
  if (b == 0 || target_energy.size() != b || pred_forces.size() != b || target_forces.size() != b)
    fail(ErrorKind::ShapeError, "energy_force_loss: batch sizes differ");
  double e = 0.0, f = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    e += (pred_energy[i] - target_energy[i]) * (pred_energy[i] - target_energy[i]);
    if (pred_forces[i].rows() != target_forces[i].rows() || pred_forces[i].rows() == 0)
      fail(ErrorKind::ShapeError, "energy_force_loss: force rows differ");
    f += (pred_forces[i] - target_forces[i]).squaredNorm() / static_cast<double>(pred_forces[i].rows());
  }
  return e / static_cast<double>(b) + lambda_forces * f / static_cast<double>(b);
}

std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> property_targets(const AtomicSystem& system,
                                                                   const PropertyStats& stats) {
  Eigen::RowVectorXd target = Eigen::RowVectorXd::Zero(kNumProperties);
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Zero(kNumProperties);
  if (system.labels.properties) {
    for (int k = 0; k < kNumProperties; ++k) {
      const auto& v = (*system.labels.properties)[static_cast<std::size_t>(k)];
      if (!v) continue;
      target[k] = stats.standardize(k, *v);
      mask[k] = 1.0;
    }
  }
  return {target, mask};
}

namespace {

ForwardFlags task_flags(FinetuneTask task) {
  ForwardFlags f;
  f.denoise = false;
  if (task == FinetuneTask::Properties) {
    f.props = true;
  } else {
    f.energy = true;
    f.forces = true;
  }
  return f;
}

bool has_ef_labels(const AtomicSystem& s) { return s.labels.energy && s.labels.forces; }

}  // namespace

template <typename T>
FinetuneGradient<T> finetune_gradient(const FlowTransformer<T>& model, const nn::ParameterStore<T>& params,
                                      const std::vector<bool>& trainable, std::span<const AtomicSystem> batch,
                                      const FinetuneConfig& config, std::uint64_t seed, std::uint64_t step) {
  using Mat = nn::Matrix<T>;
  if (batch.empty()) fail(ErrorKind::EmptyBatch, "finetune batch is empty");
  const AtomVocab vocab = model.config().vocab();
  FinetuneGradient<T> out;
  out.grads = params.zeros_like();
  const nn::ParamBinding<T> binding{&params, &out.grads, &trainable};

  double divisor = 0.0;
  int labeled = 0;
  for (const auto& s : batch) {
    if (config.task == FinetuneTask::Properties) {
      divisor += property_targets(s, config.stats).second.sum();
    } else if (has_ef_labels(s)) {
      ++labeled;
    }
  }
  if (config.task == FinetuneTask::Properties && divisor == 0.0)
    fail(ErrorKind::AllMasked, "finetune batch has no property labels");
  if (config.task == FinetuneTask::EnergyForces && labeled == 0)
    fail(ErrorKind::AllMasked, "finetune batch has no energy/force labels");

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    Mat target, mask;
    if (config.task == FinetuneTask::Properties) {
      const auto [t, m] = property_targets(s, config.stats);
      if (m.sum() == 0.0) continue;
      target = t.template cast<T>();
      mask = m.template cast<T>();
    } else if (!has_ef_labels(s)) {
      continue;
    }
    auto rng = RngStream::derive(seed, {step, static_cast<std::uint64_t>(i)});
    const double t = finetune_time(rng, config);
    const FlowState state = noise_to_time(make_endpoints(s, vocab), t, vocab.size, rng);
    nn::Graph<T> g;
    const auto fw = model.forward(g, binding, state, class_of(s.domain), task_flags(config.task));
    nn::Var loss;
    if (config.task == FinetuneTask::Properties) {
      loss = nn::masked_abs_error(g, fw.aux.props, target, mask, static_cast<T>(divisor));
    } else {
      const Mat e = Mat::Constant(1, 1, static_cast<T>(*s.labels.energy));
      const Mat f = s.labels.forces->template cast<T>();
      const nn::Var te = nn::squared_error(g, fw.aux.energy, e, T(1));
      const nn::Var tf = nn::squared_error(g, fw.aux.forces, f, T(1));
      const nn::Var terms[] = {te, tf};
      const T weights[] = {T(1) / static_cast<T>(labeled),
                           static_cast<T>(config.lambda_forces / (static_cast<double>(s.num_atoms()) * labeled))};
      loss = nn::weighted_sum(g, std::span<const nn::Var>(terms), std::span<const T>(weights));
    }
    out.loss += static_cast<double>(g.scalar(loss));
    g.backward(loss);
  }
  return out;
}

template <typename T>
FinetuneMetrics evaluate_finetune(const FlowTransformer<T>& model, const nn::ParameterStore<T>& params,
                                  std::span<const AtomicSystem> systems, const FinetuneConfig& config) {
  if (systems.empty()) fail(ErrorKind::EmptyInput, "evaluate_finetune: no systems");
  const AtomVocab vocab = model.config().vocab();
  FinetuneMetrics m;
  m.per_target_mae.assign(kNumProperties, 0.0);
  std::vector<int> per_target_count(kNumProperties, 0);
  double abs_sum = 0.0;
  int count = 0;
  std::vector<double> pe, te;
  std::vector<Coords> pf, tf;
  for (const auto& s : systems) {
    const FlowState state = make_endpoints(s, vocab);
    if (config.task == FinetuneTask::Properties) {
      const auto [target, mask] = property_targets(s, config.stats);
      if (mask.sum() == 0.0) continue;
      const auto out = model.predict_aux(params, state, class_of(s.domain), task_flags(config.task));
      for (int k = 0; k < kNumProperties; ++k) {
        if (mask[k] == 0.0) continue;
        const double p = (*out.props)[k];
        abs_sum += std::abs(p - target[k]);
        ++count;
        const auto ks = static_cast<std::size_t>(k);
        m.per_target_mae[ks] += std::abs(config.stats.destandardize(k, p) - *(*s.labels.properties)[ks]);
        ++per_target_count[ks];
      }
    } else if (has_ef_labels(s)) {
      const auto out = model.predict_aux(params, state, class_of(s.domain), task_flags(config.task));
      pe.push_back(*out.energy);
      te.push_back(*s.labels.energy);
      pf.push_back(*out.forces);
      tf.push_back(*s.labels.forces);
    }
  }
  if (config.task == FinetuneTask::Properties) {
    if (count == 0) fail(ErrorKind::AllMasked, "evaluate_finetune: no property labels");
    m.property_mae = abs_sum / count;
    m.loss = m.property_mae;
    for (int k = 0; k < kNumProperties; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      m.per_target_mae[ks] = per_target_count[ks] > 0 ? m.per_target_mae[ks] / per_target_count[ks]
                                                      : std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    if (pe.empty()) fail(ErrorKind::AllMasked, "evaluate_finetune: no energy/force labels");
    m.loss = energy_force_loss(pe, te, pf, tf, config.lambda_forces);
    double f_sum = 0.0;
    Eigen::Index f_count = 0;
    for (std::size_t i = 0; i < pe.size(); ++i) {
      m.energy_mae += std::abs(pe[i] - te[i]);
      f_sum += (pf[i] - tf[i]).cwiseAbs().sum();
      f_count += pf[i].size();
    }
    m.energy_mae /= static_cast<double>(pe.size());
    m.force_mae = f_sum / static_cast<double>(f_count);
  }
  return m;
}

double validation_metric(const FinetuneMetrics& m, const FinetuneConfig& config) {
  return config.task == FinetuneTask::Properties ? m.property_mae
                                                 : m.energy_mae + config.lambda_forces * m.force_mae;
}

template <typename T>
FinetuneResult<T> finetune_loop(const FlowTransformer<T>& model, nn::ParameterStore<T> params,
                                std::span<const AtomicSystem> train, std::span<const AtomicSystem> val,
                                const FinetuneConfig& config, const FinetuneLoopOptions& options) {
  if (train.empty()) fail(ErrorKind::EmptyInput, "finetune_loop: empty training split");
  if (options.steps < 0 || options.batch_size < 1 || options.eval_every < 1)
    fail(ErrorKind::ConfigError, "finetune_loop: steps >= 0, batch_size >= 1, eval_every >= 1 required");
  const auto trainable = freeze_and_bind(model, config);
  const auto val_set = val.empty() ? train : val;
  nn::AdamW<T> opt(params, options.adam);
  FinetuneResult<T> result;
  result.best = params;
  result.best_metric = validation_metric(evaluate_finetune(model, params, val_set, config), config);
  result.log.push_back({0, 0.0, result.best_metric});

  const std::size_t n = train.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), n);
  std::vector<AtomicSystem> batch;
  for (int step = 0; step < options.steps; ++step) {
    batch.clear();
    for (std::size_t j = 0; j < bs; ++j) batch.push_back(train[(static_cast<std::size_t>(step) * bs + j) % n]);
    const auto grad = finetune_gradient(model, params, trainable, batch, config, options.seed,
                                        static_cast<std::uint64_t>(step));
    opt.step(params, grad.grads, &trainable);
    const bool eval = (step + 1) % options.eval_every == 0 || step + 1 == options.steps;
    if (eval) {
      const double metric = validation_metric(evaluate_finetune(model, params, val_set, config), config);
      result.log.push_back({step + 1, grad.loss, metric});
      if (metric < result.best_metric) {
        result.best_metric = metric;
        result.best_step = step + 1;
        result.best = params;
      }
    }
  }
  result.last = std::move(params);
  return result;
}

#define ATOMFLOW_INSTANTIATE_FINETUNE(T)                                                                          \
  template std::vector<bool> freeze_and_bind<T>(const FlowTransformer<T>&, const FinetuneConfig&);                \
  template FinetuneGradient<T> finetune_gradient<T>(const FlowTransformer<T>&, const nn::ParameterStore<T>&,      \
                                                    const std::vector<bool>&, std::span<const AtomicSystem>,      \
                                                    const FinetuneConfig&, std::uint64_t, std::uint64_t);         \
  template FinetuneMetrics evaluate_finetune<T>(const FlowTransformer<T>&, const nn::ParameterStore<T>&,          \
                                                std::span<const AtomicSystem>, const FinetuneConfig&);            \
  template FinetuneResult<T> finetune_loop<T>(const FlowTransformer<T>&, nn::ParameterStore<T>,                   \
                                              std::span<const AtomicSystem>, std::span<const AtomicSystem>,       \
                                              const FinetuneConfig&, const FinetuneLoopOptions&);

ATOMFLOW_INSTANTIATE_FINETUNE(float)
ATOMFLOW_INSTANTIATE_FINETUNE(double)

#undef ATOMFLOW_INSTANTIATE_FINETUNE

}  // namespace atomflow
