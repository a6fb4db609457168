#pragma once

#include <Eigen/Dense>

#include "atomflow/flow.hpp"
#include "atomflow/nn/graph.hpp"
#include "atomflow/nn/params.hpp"

namespace atomflow {

/// Plain-valued denoiser outputs (inference path).
struct DenoiseOutput {
  Eigen::MatrixXd atom_logits;  // N x K
  Coords cart;
  Coords frac;
  Vec3 lengths = Vec3::Zero();  // normalized scale
  Vec3 angles = Vec3::Zero();   // radians
};

/// A network that maps a noised FlowState to predicted clean endpoints.
template <typename T>
class Denoiser {
 public:
  using Binding = nn::ParamBinding<T>;

  virtual ~Denoiser() = default;

  virtual const nn::ParameterLayout& parameter_layout() const = 0;
  virtual void init_parameters(nn::ParameterStore<T>& store, RngStream& rng) const = 0;
  virtual bool supports(DomainClass domain) const = 0;
  virtual int num_atom_types() const = 0;

  /// Records the denoising forward pass. With `dropout_rng` the class label is dropped at
  /// the configured rate.
  virtual DenoiseVars denoise(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                              RngStream* dropout_rng = nullptr) const = 0;

  DenoiseOutput predict(const nn::ParameterStore<T>& store, const FlowState& state, ClassLabel label) const;
};

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace atomflow
