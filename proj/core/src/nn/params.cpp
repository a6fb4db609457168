#include "atomflow/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "atomflow/errors.hpp"

namespace atomflow::nn {

std::size_t ParameterLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) fail(ErrorKind::ConfigError, "duplicate parameter name " + name);
  if (rows <= 0 || cols <= 0) fail(ErrorKind::ShapeError, "parameter " + name + " has an empty shape");
  const std::size_t i = specs_.size();
  index_.emplace(name, i);
  specs_.push_back({std::move(name), rows, cols});
  return i;
}

std::size_t ParameterLayout::index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::ConfigMismatch, "unknown parameter " + name);
  return it->second;
}

std::int64_t ParameterLayout::total_count() const {
  std::int64_t n = 0;
  for (const auto& s : specs_) n += s.count();
  return n;
}

template <typename T>
ParameterStore<T>::ParameterStore(ParameterLayout layout) : layout_(std::move(layout)) {
  values_.reserve(layout_.size());
  for (const auto& s : layout_.specs()) values_.push_back(Mat::Zero(s.rows, s.cols));
}

template <typename T>
std::vector<Matrix<T>> ParameterStore<T>::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Mat::Zero(v.rows(), v.cols()));
  return out;
}

template <typename T>
bool ParameterStore<T>::bitwise_equal(const ParameterStore& other) const {
  if (values_.size() != other.values_.size()) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& a = values_[i];
    const auto& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.size())) != 0) return false;
  }
  return true;
}

template <typename T>
void fill_truncated_normal(Matrix<T>& m, double stddev, RngStream& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    m.data()[i] = static_cast<T>(z * stddev);
  }
}

template <typename T>
AdamW<T>::AdamW(const ParameterStore<T>& params, AdamWOptions options)
    : options_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

template <typename T>
void AdamW<T>::step(ParameterStore<T>& params, const std::vector<Mat>& grads, const std::vector<bool>* trainable) {
  if (grads.size() != params.size()) fail(ErrorKind::ShapeError, "gradient count != parameter count");
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const T b1 = static_cast<T>(options_.beta1);
  const T b2 = static_cast<T>(options_.beta2);
  const T step_size = static_cast<T>(options_.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(options_.eps);
  const T decay = static_cast<T>(1.0 - options_.lr * options_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (trainable && !(*trainable)[i]) continue;
    const Mat& gr = grads[i];
    if (gr.size() == 0) continue;
    Mat& p = params.value(i);
    if (options_.weight_decay != 0.0) p *= decay;
    m_[i] = b1 * m_[i] + (T(1) - b1) * gr;
    v_[i] = b2 * v_[i] + (T(1) - b2) * gr.cwiseAbs2();
    p.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

template <typename T>
double Ema<T>::effective_decay() const {
  const double n = static_cast<double>(updates_);
  return std::min(decay_, (1.0 + n) / (10.0 + n));
}

template <typename T>
void Ema<T>::update(const ParameterStore<T>& params) {
  const T d = static_cast<T>(effective_decay());
  ++updates_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    shadow_.value(i) = d * shadow_.value(i) + (T(1) - d) * params.value(i);
  }
}

template <typename T>
double squared_norm(const std::vector<Matrix<T>>& tensors) {
  double s = 0.0;
  for (const auto& t : tensors) s += static_cast<double>(t.squaredNorm());
  return s;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class AdamW<float>;
template class AdamW<double>;
template class Ema<float>;
template class Ema<double>;
template void fill_truncated_normal<float>(Matrix<float>&, double, RngStream&);
template void fill_truncated_normal<double>(Matrix<double>&, double, RngStream&);
template double squared_norm<float>(const std::vector<Matrix<float>>&);
template double squared_norm<double>(const std::vector<Matrix<double>>&);

}  // namespace atomflow::nn
