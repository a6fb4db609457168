#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "atomflow/nn/graph.hpp"
#include "atomflow/rng.hpp"

namespace atomflow::nn {

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  std::int64_t count() const { return static_cast<std::int64_t>(rows) * cols; }
};

/// Ordered list of named tensor shapes. Order is part of the checkpoint contract.
class ParameterLayout {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<TensorSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }
  std::int64_t total_count() const;

 private:
  std::vector<TensorSpec> specs_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Named trainable tensors laid out per a ParameterLayout.
template <typename T>
class ParameterStore {
 public:
  using Mat = Matrix<T>;

  ParameterStore() = default;
  explicit ParameterStore(ParameterLayout layout);

  const ParameterLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  Mat& value(std::size_t i) { return values_[i]; }
  const Mat& value(std::size_t i) const { return values_[i]; }
  Mat& value(const std::string& name) { return values_[layout_.index(name)]; }
  const Mat& value(const std::string& name) const { return values_[layout_.index(name)]; }
  std::vector<Mat>& values() { return values_; }
  const std::vector<Mat>& values() const { return values_; }

  /// Zero-filled buffers matching every tensor shape.
  std::vector<Mat> zeros_like() const;

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out(layout_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.value(i) = values_[i].template cast<U>();
    return out;
  }

  bool bitwise_equal(const ParameterStore& other) const;

 private:
  ParameterLayout layout_;
  std::vector<Mat> values_;
};

/// Truncated normal (cut at two standard deviations).
template <typename T>
void fill_truncated_normal(Matrix<T>& m, double stddev, RngStream& rng);

/// Bound view of a store used while recording a forward pass.
template <typename T>
struct ParamBinding {
  const ParameterStore<T>* store = nullptr;
  std::vector<Matrix<T>>* grads = nullptr;       // null: inference
  const std::vector<bool>* trainable = nullptr;  // null: everything trainable

  Var get(Graph<T>& g, std::size_t index) const {
    Matrix<T>* sink = nullptr;
    if (grads && (!trainable || (*trainable)[index])) sink = &(*grads)[index];
    return g.parameter(store->value(index), sink);
  }
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam. Tensors whose mask entry is false are never touched.
template <typename T>
class AdamW {
 public:
  using Mat = Matrix<T>;

  AdamW(const ParameterStore<T>& params, AdamWOptions options);

  void step(ParameterStore<T>& params, const std::vector<Mat>& grads, const std::vector<bool>* trainable = nullptr);
  std::int64_t steps_taken() const { return step_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::int64_t step_ = 0;
};

/// Exponential moving average of parameters: ema <- decay * ema + (1 - decay) * param.
template <typename T>
class Ema {
 public:
  Ema(const ParameterStore<T>& params, double decay) : shadow_(params), decay_(decay) {}

  /// Effective decay min(decay, (1 + n) / (10 + n)) for the n-th update, so early
  /// averages are not dominated by the initialization.
  void update(const ParameterStore<T>& params);
  double effective_decay() const;
  std::int64_t updates() const { return updates_; }
  const ParameterStore<T>& shadow() const { return shadow_; }
  ParameterStore<T>& shadow() { return shadow_; }
  double decay() const { return decay_; }

 private:
  ParameterStore<T> shadow_;
  double decay_;
  std::int64_t updates_ = 0;
};

template <typename T>
double squared_norm(const std::vector<Matrix<T>>& tensors);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class AdamW<float>;
extern template class AdamW<double>;
extern template class Ema<float>;
extern template class Ema<double>;

}  // namespace atomflow::nn
