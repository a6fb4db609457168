#include "atomflow/train.hpp"

#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "atomflow/errors.hpp"

namespace atomflow {

ParallelOptions ParallelOptions::from_env() {
  ParallelOptions o;
  if (const char* t = std::getenv("ATOMFLOW_THREADS")) {
    try {
      o.threads = std::max(1, std::stoi(t));
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, std::string("ATOMFLOW_THREADS is not an integer: ") + t);
    }
  }
  if (const char* d = std::getenv("ATOMFLOW_DETERMINISTIC")) o.deterministic = std::string(d) != "0";
  return o;
}

void for_each_chunk(std::size_t count, int chunks, const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (count == 0) return;
  const auto c = static_cast<std::size_t>(std::max(1, std::min<int>(chunks, static_cast<int>(count))));
  const std::size_t base = count / c;
  const std::size_t extra = count % c;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    ranges.emplace_back(begin, begin + len);
    begin += len;
  }
  if (c == 1) {
    fn(0, count, 0);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(c);
  for (std::size_t i = 0; i < c; ++i)
    workers.emplace_back([&, i] {
      try {
        fn(ranges[i].first, ranges[i].second, static_cast<int>(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename T>
BatchGradient<T> batch_gradient(const Denoiser<T>& model, const nn::ParameterStore<T>& params,
                                std::span<const FlowState> batch, const LossWeights& weights, std::uint64_t seed,
                                std::uint64_t step, const ParallelOptions& parallel, bool class_dropout) {
  if (batch.empty()) fail(ErrorKind::EmptyBatch, "batch_gradient: empty batch");
  const int chunks = std::min<int>(parallel.chunks(), static_cast<int>(batch.size()));
  struct Partial {
    std::vector<nn::Matrix<T>> grads;
    double loss = 0.0;
    LossBreakdown sum;
  };
  std::vector<Partial> parts(static_cast<std::size_t>(chunks));
  const T inv = T(1) / static_cast<T>(batch.size());

  for_each_chunk(batch.size(), chunks, [&](std::size_t begin, std::size_t end, int c) {
    auto& part = parts[static_cast<std::size_t>(c)];
    part.grads = params.zeros_like();
    const nn::ParamBinding<T> binding{&params, &part.grads, nullptr};
    for (std::size_t i = begin; i < end; ++i) {
      const FlowState& state = batch[i];
      if (!model.supports(state.domain))
        fail(ErrorKind::UnsupportedDomain, "model does not support domain " + std::string(to_string(state.domain)));
      nn::Graph<T> g;
      auto rng = RngStream::derive(seed, {step, static_cast<std::uint64_t>(i), 0xD509});
      const auto out = model.denoise(g, binding, state, class_of(state.domain), class_dropout ? &rng : nullptr);
      const auto loss = total_training_loss(g, out, state, weights);
      if (!std::isfinite(loss.breakdown.weighted)) fail(ErrorKind::NonFiniteActivation, "non-finite training loss");
      g.backward(loss.weighted, inv);
      part.loss += loss.breakdown.weighted;
      part.sum.cart += loss.breakdown.cart;
      part.sum.frac += loss.breakdown.frac;
      part.sum.lengths += loss.breakdown.lengths;
      part.sum.angles += loss.breakdown.angles;
      part.sum.discrete += loss.breakdown.discrete;
      part.sum.total += loss.breakdown.total;
      part.sum.weight += loss.breakdown.weight;
    }
  });

  BatchGradient<T> out;
  out.grads = std::move(parts[0].grads);
  LossBreakdown sum = parts[0].sum;
  double loss = parts[0].loss;
  for (std::size_t c = 1; c < parts.size(); ++c) {
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += parts[c].grads[k];
    loss += parts[c].loss;
    sum.cart += parts[c].sum.cart;
    sum.frac += parts[c].sum.frac;
    sum.lengths += parts[c].sum.lengths;
    sum.angles += parts[c].sum.angles;
    sum.discrete += parts[c].sum.discrete;
    sum.total += parts[c].sum.total;
    sum.weight += parts[c].sum.weight;
  }
  const double n = static_cast<double>(batch.size());
  out.loss = loss / n;
  out.mean = {sum.cart / n, sum.frac / n, sum.lengths / n, sum.angles / n, sum.discrete / n, sum.total / n,
              sum.weight / n, loss / n};
  return out;
}

void TrainConfig::validate() const {
  loss.validate();
  if (copies < 1) fail(ErrorKind::ConfigError, "copies must be >= 1");
  if (!(adam.lr > 0.0)) fail(ErrorKind::ConfigError, "lr must be > 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail(ErrorKind::ConfigError, "ema_decay must lie in [0, 1)");
  if (!(grad_clip >= 0.0)) fail(ErrorKind::ConfigError, "grad_clip must be >= 0");
}

template <typename T>
Trainer<T>::Trainer(const Denoiser<T>& model, nn::ParameterStore<T> params, TrainConfig config,
                    ParallelOptions parallel)
    : model_(model),
      params_(std::move(params)),
      config_(config),
      parallel_(parallel),
      optimizer_(params_, config.adam),
      ema_(params_, config.ema_decay) {
  config_.validate();
  if (params_.size() != model.parameter_layout().size())
    fail(ErrorKind::ConfigMismatch, "parameter store does not match the model layout");
}

template <typename T>
StepReport Trainer<T>::step(std::span<const AtomicSystem> systems) {
  const auto s = static_cast<std::uint64_t>(step_);
  const AtomVocab vocab{model_.num_atom_types()};
  const auto batch = build_training_batch(systems, config_.copies, config_.loss.alpha_t, vocab, config_.seed, s);
  auto bg = batch_gradient(model_, params_, batch, config_.loss, config_.seed ^ 0x5EEDULL, s, parallel_);
  StepReport report;
  report.grad_norm = std::sqrt(nn::squared_norm(bg.grads));
  if (!std::isfinite(report.grad_norm)) fail(ErrorKind::NonFiniteActivation, "non-finite gradient");
  if (config_.grad_clip > 0.0 && report.grad_norm > config_.grad_clip) {
    const T f = static_cast<T>(config_.grad_clip / report.grad_norm);
    for (auto& g : bg.grads) g *= f;
  }
  optimizer_.step(params_, bg.grads);
  ema_.update(params_);
  ++step_;
  report.step = step_;
  report.loss = bg.loss;
  report.mean = bg.mean;
  return report;
}

template <typename T>
double Trainer<T>::validation_loss(std::span<const AtomicSystem> systems, std::uint64_t seed, int copies) const {
  const AtomVocab vocab{model_.num_atom_types()};
  const auto batch = build_training_batch(systems, copies, config_.loss.alpha_t, vocab, seed, 0);
  double total = 0.0;
  const nn::ParamBinding<T> binding{&ema_.shadow(), nullptr, nullptr};
  for (const auto& state : batch) {
    nn::Graph<T> g;
    const auto out = model_.denoise(g, binding, state, class_of(state.domain));
    total += total_training_loss(g, out, state, config_.loss).breakdown.weighted;
  }
  return total / static_cast<double>(batch.size());
}

template BatchGradient<float> batch_gradient<float>(const Denoiser<float>&, const nn::ParameterStore<float>&,
                                                    std::span<const FlowState>, const LossWeights&, std::uint64_t,
                                                    std::uint64_t, const ParallelOptions&, bool);
template BatchGradient<double> batch_gradient<double>(const Denoiser<double>&, const nn::ParameterStore<double>&,
                                                      std::span<const FlowState>, const LossWeights&, std::uint64_t,
                                                      std::uint64_t, const ParallelOptions&, bool);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace atomflow
