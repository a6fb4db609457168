#pragma once

#include <string>
#include <vector>

#include "atomflow/denoiser.hpp"
#include "atomflow/equivariant/group.hpp"
#include "atomflow/equivariant/layers.hpp"
#include "atomflow/model.hpp"

namespace atomflow::equivariant {

struct TfpConfig {
  GroupName group = GroupName::Tetrahedral;
  int d_model = 512;  // width D before channel matching
  ChannelMode channel_mode = ChannelMode::Balanced;
  int num_layers = 16;
  int num_heads = 8;
  int num_atom_types = 100;
  int ffn_multiplier = 4;
  int time_embed_dim = 256;
  double class_dropout_prob = 0.1;

  void validate() const;
  /// Per-slot width C.
  int channels() const;
};

/// Group-equivariant flow transformer for molecules. Atom, class and time embeddings are
/// lifted as scalars, zero-centered coordinates as a vector; every linear map is a
/// g_linear, attention runs per (head, group slot), and outputs are projected back to
/// invariant atom logits and equivariant Cartesian endpoints.
template <typename T>
class Platoformer final : public Denoiser<T> {
 public:
  using Mat = nn::Matrix<T>;
  using Binding = nn::ParamBinding<T>;

  explicit Platoformer(TfpConfig config);

  const TfpConfig& config() const { return config_; }
  const GroupTable& group() const { return group_; }
  const nn::ParameterLayout& parameter_layout() const override { return layout_; }
  bool supports(DomainClass domain) const override { return domain == DomainClass::Molecule; }
  int num_atom_types() const override { return config_.num_atom_types; }

  void init_parameters(nn::ParameterStore<T>& store, RngStream& rng) const override;

  /// Lifted input embedding, (N |G|) x C. Raises UnsupportedDomain for materials.
  nn::Var embed_inputs(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                       RngStream* dropout_rng = nullptr) const;
  DenoiseVars denoise(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                      RngStream* dropout_rng = nullptr) const override;

 private:
  struct BlockIdx {
    detail::NormIdx ln1, ln_kv, ln2;
    detail::AttnIdx attn;
    detail::FfnIdx ffn;
  };

  nn::Var norm(nn::Graph<T>& g, const Binding& p, const detail::NormIdx& idx, nn::Var x) const;
  nn::Var glin(nn::Graph<T>& g, const Binding& p, std::size_t w, nn::Var x) const;
  nn::Var block(nn::Graph<T>& g, const Binding& p, const BlockIdx& idx, nn::Var x, nn::Var memory,
                bool cross) const;

  TfpConfig config_;
  GroupTable group_;
  int channels_ = 0;
  nn::ParameterLayout layout_;

  std::size_t atom_embed_ = 0, class_embed_ = 0, time_w_ = 0, time_b_ = 0, cart_embed_ = 0;
  std::vector<BlockIdx> trunk_;
  detail::NormIdx trunk_norm_;
  BlockIdx decoder_;
  detail::LinearIdx atom_hidden_, atom_out_;
  detail::NormIdx cart_norm_;
  std::size_t cart_out_ = 0;

  std::vector<std::size_t> zero_init_, unit_init_, scale_init_;
};

extern template class Platoformer<float>;
extern template class Platoformer<double>;

}  // namespace atomflow::equivariant
