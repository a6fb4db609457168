#include "atomflow/denoiser.hpp"

namespace atomflow {

template <typename T>
DenoiseOutput Denoiser<T>::predict(const nn::ParameterStore<T>& store, const FlowState& state,
                                   ClassLabel label) const {
  nn::Graph<T> g;
  const Binding p{&store, nullptr, nullptr};
  const DenoiseVars d = denoise(g, p, state, label);
  DenoiseOutput out;
  out.atom_logits = g.value(d.atom_logits).template cast<double>();
  if (d.cart.valid()) out.cart = g.value(d.cart).template cast<double>();
  if (d.frac.valid()) out.frac = g.value(d.frac).template cast<double>();
  if (d.lengths.valid()) out.lengths = g.value(d.lengths).row(0).transpose().template cast<double>();
  if (d.angles.valid()) out.angles = g.value(d.angles).row(0).transpose().template cast<double>();
  return out;
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace atomflow
