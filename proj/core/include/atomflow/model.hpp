#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "atomflow/denoiser.hpp"
#include "atomflow/flow.hpp"
#include "atomflow/nn/graph.hpp"
#include "atomflow/nn/params.hpp"

namespace atomflow {

/// Architecture dimensions of the trunk-based flow transformer.
struct TftConfig {
  int d_model = 512;
  int num_trunk_layers = 16;  // L
  int num_heads = 8;
  int num_aux_layers = 4;  // M
  int tap_layer = 16;      // K, 1 <= K <= L
  int num_atom_types = 100;
  int num_properties = kNumProperties;
  int ffn_multiplier = 4;
  int time_embed_dim = 256;
  double class_dropout_prob = 0.1;

  void validate() const;
  int head_dim() const { return d_model / num_heads; }
  int ffn_hidden() const { return ffn_multiplier * d_model; }
  AtomVocab vocab() const { return AtomVocab{num_atom_types}; }
};

enum class AuxHead { Props = 0, Energy = 1, Forces = 2 };
inline constexpr std::array<AuxHead, 3> kAuxHeads = {AuxHead::Props, AuxHead::Energy, AuxHead::Forces};
std::string_view to_string(AuxHead head) noexcept;

struct TrunkVars {
  nn::Var z_final;
  nn::Var z_tap;
  nn::Var input_embeddings;
};

/// Auxiliary predictions; only requested heads are valid. props 1 x P, energy 1 x 1, forces N x 3.
struct AuxVars {
  nn::Var props, energy, forces;
};

struct ForwardFlags {
  bool denoise = true;
  bool props = false;
  bool energy = false;
  bool forces = false;
};

struct ForwardVars {
  std::optional<DenoiseVars> denoise;
  AuxVars aux;
  TrunkVars trunk;
};

struct AuxOutput {
  std::optional<Eigen::VectorXd> props;
  std::optional<double> energy;
  std::optional<Coords> forces;
};

/// 256-dim style sinusoidal code of t (scaled to [0, 1000]), as a 1 x dim row.
Eigen::RowVectorXd sinusoidal_time_code(double t, int dim);

namespace detail {
struct NormIdx {
  std::size_t gamma = 0, beta = 0;
};
struct AttnIdx {
  std::size_t wq = 0, wk = 0, wv = 0, wo = 0, scale = 0;
};
struct FfnIdx {
  std::size_t gate = 0, up = 0, down = 0;
};
struct EncoderIdx {
  NormIdx ln1;
  AttnIdx attn;
  NormIdx ln2;
  FfnIdx ffn;
};
struct DecoderIdx {
  NormIdx ln_q, ln_kv;
  AttnIdx attn;
  NormIdx ln2;
  FfnIdx ffn;
};
struct LinearIdx {
  std::size_t w = 0, b = 0;
  bool has_bias = false;
};
}  // namespace detail

/// Trunk-based flow transformer: masked multimodal embedding, L-layer pre-norm encoder
/// trunk with QK-normalized attention and SwiGLU feed-forward, a cross-attention decoder
/// block feeding five denoising heads, and three auxiliary decoder + M-layer stacks tapped
/// at trunk layer K.
template <typename T>
class FlowTransformer final : public Denoiser<T> {
 public:
  using Mat = nn::Matrix<T>;
  using Binding = nn::ParamBinding<T>;

  explicit FlowTransformer(TftConfig config);

  const TftConfig& config() const { return config_; }
  const nn::ParameterLayout& layout() const { return layout_; }
  const nn::ParameterLayout& parameter_layout() const override { return layout_; }
  bool supports(DomainClass) const override { return true; }
  int num_atom_types() const override { return config_.num_atom_types; }

  /// Truncated-normal(0.02) linear maps, unit LayerNorm gains, sqrt(head_dim) attention
  /// temperatures, zero final output layers.
  void init_parameters(nn::ParameterStore<T>& store, RngStream& rng) const override;

  /// Names of tensors that belong to the pretrained denoiser (embeddings, trunk, denoising
  /// decoder and heads), as opposed to auxiliary prediction stacks.
  bool is_denoiser_tensor(const std::string& name) const;
  /// Names of tensors that belong to one auxiliary head stack.
  bool is_aux_tensor(const std::string& name, AuxHead head) const;

  /// h_i = Embed(a_i) + Embed(c) + Embed(t) + sum_v Lin_NB(v). Null modalities enter as
  /// zeros. When `dropout_rng` is given the class is replaced by the null token with
  /// probability class_dropout_prob.
  nn::Var embed_inputs(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                       RngStream* dropout_rng = nullptr, bool* dropped = nullptr) const;
  TrunkVars trunk_forward(nn::Graph<T>& g, const Binding& p, nn::Var h) const;
  DenoiseVars denoise_decode(nn::Graph<T>& g, const Binding& p, const TrunkVars& trunk) const;
  nn::Var aux_decode(nn::Graph<T>& g, const Binding& p, const TrunkVars& trunk, AuxHead head) const;

  ForwardVars forward(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                      const ForwardFlags& flags, RngStream* dropout_rng = nullptr) const;

  DenoiseVars denoise(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                      RngStream* dropout_rng = nullptr) const override;

  AuxOutput predict_aux(const nn::ParameterStore<T>& store, const FlowState& state, ClassLabel label,
                        const ForwardFlags& flags) const;

 private:
  nn::Var encoder_block(nn::Graph<T>& g, const Binding& p, const detail::EncoderIdx& idx, nn::Var x) const;
  nn::Var decoder_block(nn::Graph<T>& g, const Binding& p, const detail::DecoderIdx& idx, nn::Var queries,
                        nn::Var memory) const;
  nn::Var norm(nn::Graph<T>& g, const Binding& p, const detail::NormIdx& idx, nn::Var x) const;
  nn::Var lin(nn::Graph<T>& g, const Binding& p, const detail::LinearIdx& idx, nn::Var x) const;

  TftConfig config_;
  nn::ParameterLayout layout_;

  std::size_t atom_embed_ = 0, class_embed_ = 0;
  detail::LinearIdx time_proj_, cart_proj_, frac_proj_, len_proj_, ang_proj_;
  std::vector<detail::EncoderIdx> trunk_;
  detail::NormIdx trunk_norm_;

  detail::DecoderIdx denoise_decoder_;
  std::array<detail::LinearIdx, 5> adapters_;  // atom, cart, frac, len, ang
  detail::LinearIdx atom_hidden_, atom_out_;
  detail::NormIdx cart_norm_, frac_norm_, len_norm_, ang_norm_;
  detail::LinearIdx cart_out_, frac_out_, len_out_, ang_out_;

  struct AuxStack {
    detail::DecoderIdx decoder;
    std::vector<detail::EncoderIdx> layers;
    detail::NormIdx final_norm;
    detail::LinearIdx out;
  };
  std::array<AuxStack, 3> aux_;

  std::vector<std::size_t> zero_init_;
  std::vector<std::size_t> unit_init_;
  std::vector<std::size_t> scale_init_;
};

extern template class FlowTransformer<float>;
extern template class FlowTransformer<double>;


}  // namespace atomflow
