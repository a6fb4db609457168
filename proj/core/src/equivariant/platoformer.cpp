#include "atomflow/equivariant/platoformer.hpp"

#include <cmath>

#include "atomflow/errors.hpp"
#include "atomflow/nn/ops.hpp"

namespace atomflow::equivariant {

using nn::Var;

void TfpConfig::validate() const {
  if (num_layers < 1) fail(ErrorKind::ConfigError, "tfp: num_layers must be >= 1");
  if (num_heads < 1) fail(ErrorKind::ConfigError, "tfp: num_heads must be >= 1");
  if (num_atom_types < 2 || num_atom_types > 118) fail(ErrorKind::ConfigError, "tfp: num_atom_types must lie in [2, 118]");
  if (ffn_multiplier < 1) fail(ErrorKind::ConfigError, "tfp: ffn_multiplier must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail(ErrorKind::ConfigError, "tfp: time_embed_dim must be even");
  if (!(class_dropout_prob >= 0.0 && class_dropout_prob <= 1.0))
    fail(ErrorKind::ConfigError, "tfp: class_dropout_prob must lie in [0, 1]");
  (void)channels();
}

int TfpConfig::channels() const {
  return channel_match(d_model, group == GroupName::Tetrahedral ? 12 : 24, channel_mode, num_heads);
}

template <typename T>
Platoformer<T>::Platoformer(TfpConfig config) : config_(config), group_(build_group(config.group)) {
  config_.validate();
  channels_ = config_.channels();
  const int c = channels_;
  const int gc = group_.order * c;
  const int f = config_.ffn_multiplier * c;
  const int h = config_.num_heads;
  auto zeros = [&](const std::string& name, int r, int cols) {
    const auto i = layout_.add(name, r, cols);
    zero_init_.push_back(i);
    return i;
  };
  auto norm_idx = [&](const std::string& prefix) {
    detail::NormIdx idx;
    idx.gamma = layout_.add(prefix + ".gamma", 1, c);
    unit_init_.push_back(idx.gamma);
    idx.beta = zeros(prefix + ".beta", 1, c);
    return idx;
  };
  auto block_idx = [&](const std::string& prefix, bool cross) {
    BlockIdx b;
    b.ln1 = norm_idx(prefix + (cross ? ".ln_q" : ".ln1"));
    if (cross) b.ln_kv = norm_idx(prefix + ".ln_kv");
    b.attn.wq = layout_.add(prefix + ".attn.wq", gc, c);
    b.attn.wk = layout_.add(prefix + ".attn.wk", gc, c);
    b.attn.wv = layout_.add(prefix + ".attn.wv", gc, c);
    b.attn.wo = layout_.add(prefix + ".attn.wo", gc, c);
    b.attn.scale = layout_.add(prefix + ".attn.scale", 1, h);
    scale_init_.push_back(b.attn.scale);
    b.ln2 = norm_idx(prefix + ".ln2");
    b.ffn.gate = layout_.add(prefix + ".ffn.gate", gc, f);
    b.ffn.up = layout_.add(prefix + ".ffn.up", gc, f);
    b.ffn.down = layout_.add(prefix + ".ffn.down", group_.order * f, c);
    return b;
  };

  atom_embed_ = layout_.add("tfp.embed.atom", config_.num_atom_types, c);
  class_embed_ = layout_.add("tfp.embed.class", 3, c);
  time_w_ = layout_.add("tfp.embed.time.w", config_.time_embed_dim, c);
  time_b_ = zeros("tfp.embed.time.b", 1, c);
  cart_embed_ = layout_.add("tfp.embed.cart.w", group_.order * 3, c);
  for (int i = 0; i < config_.num_layers; ++i) trunk_.push_back(block_idx("tfp.trunk." + std::to_string(i), false));
  trunk_norm_ = norm_idx("tfp.trunk.norm");
  decoder_ = block_idx("tfp.decoder", true);
  atom_hidden_ = {layout_.add("tfp.atom.hidden.w", c, c), zeros("tfp.atom.hidden.b", 1, c), true};
  atom_out_ = {zeros("tfp.atom.out.w", c, config_.num_atom_types), zeros("tfp.atom.out.b", 1, config_.num_atom_types),
               true};
  cart_norm_ = norm_idx("tfp.cart.norm");
  cart_out_ = zeros("tfp.cart.out.w", gc, 3);
}

template <typename T>
void Platoformer<T>::init_parameters(nn::ParameterStore<T>& store, RngStream& rng) const {
  if (store.size() != layout_.size()) fail(ErrorKind::ConfigMismatch, "store does not match tfp layout");
  for (std::size_t i = 0; i < store.size(); ++i) nn::fill_truncated_normal(store.value(i), 0.02, rng);
  for (auto i : zero_init_) store.value(i).setZero();
  for (auto i : unit_init_) store.value(i).setOnes();
  const T s = static_cast<T>(std::sqrt(static_cast<double>(channels_ / config_.num_heads)));
  for (auto i : scale_init_) store.value(i).setConstant(s);
}

template <typename T>
Var Platoformer<T>::norm(nn::Graph<T>& g, const Binding& p, const detail::NormIdx& idx, Var x) const {
  return nn::layer_norm(g, x, p.get(g, idx.gamma), p.get(g, idx.beta));
}

template <typename T>
Var Platoformer<T>::glin(nn::Graph<T>& g, const Binding& p, std::size_t w, Var x) const {
  return nn::group_linear(g, x, p.get(g, w), group_.cayley);
}

template <typename T>
Var Platoformer<T>::block(nn::Graph<T>& g, const Binding& p, const BlockIdx& idx, Var x, Var memory,
                          bool cross) const {
  const Var a = norm(g, p, idx.ln1, x);
  const Var kv = cross ? norm(g, p, idx.ln_kv, memory) : a;
  const Var q = glin(g, p, idx.attn.wq, a);
  const Var k = glin(g, p, idx.attn.wk, kv);
  const Var v = glin(g, p, idx.attn.wv, kv);
  const Var att = nn::attention(g, q, k, v, p.get(g, idx.attn.scale), config_.num_heads, group_.order);
  x = nn::add(g, x, glin(g, p, idx.attn.wo, att));
  const Var b = norm(g, p, idx.ln2, x);
  const Var gate = nn::silu(g, glin(g, p, idx.ffn.gate, b));
  const Var up = glin(g, p, idx.ffn.up, b);
  return nn::add(g, x, glin(g, p, idx.ffn.down, nn::mul(g, gate, up)));
}

template <typename T>
Var Platoformer<T>::embed_inputs(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                                 RngStream* dropout_rng) const {
  if (state.domain != DomainClass::Molecule)
    fail(ErrorKind::UnsupportedDomain, "the equivariant variant supports molecules only");
  const int n = state.num_atoms();
  if (n < 1 || !state.noisy_cart || state.noisy_cart->rows() != n)
    fail(ErrorKind::ShapeError, "tfp embed_inputs: molecule state needs N x 3 coordinates");
  for (int a : state.noisy_types)
    if (a < 0 || a >= config_.num_atom_types) fail(ErrorKind::ShapeError, "tfp embed_inputs: atom type outside vocabulary");

  bool drop = false;
  if (dropout_rng) drop = dropout_rng->uniform() < config_.class_dropout_prob;
  const int cls = drop ? static_cast<int>(ClassLabel::Null) : static_cast<int>(label);

  const Var atom = nn::gather_rows(g, p.get(g, atom_embed_), state.noisy_types);
  const Var cls_row = nn::gather_rows(g, p.get(g, class_embed_), {cls});
  const Mat code = sinusoidal_time_code(state.t, config_.time_embed_dim).template cast<T>();
  const Var time_row = nn::linear(g, g.constant(code), p.get(g, time_w_), p.get(g, time_b_));
  const Var scalars = nn::add_row(g, atom, nn::add(g, cls_row, time_row));

  const Coords centered = zero_center(*state.noisy_cart);
  const Coords vecs[] = {centered};
  const auto lifted = lift(RegularMatrix(n, 0), vecs, group_);
  const Var cart = glin(g, p, cart_embed_, g.constant(lifted.data.template cast<T>()));
  return nn::add(g, nn::repeat_rows(g, scalars, group_.order), cart);
}

template <typename T>
DenoiseVars Platoformer<T>::denoise(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                                    RngStream* dropout_rng) const {
  const Var h = embed_inputs(g, p, state, label, dropout_rng);
  Var x = h;
  for (const auto& b : trunk_) x = block(g, p, b, x, Var{}, false);
  if (!g.value(x).allFinite()) fail(ErrorKind::NonFiniteActivation, "tfp trunk produced non-finite activations");
  const Var z = norm(g, p, trunk_norm_, x);
  const Var u = block(g, p, decoder_, h, z, true);

  DenoiseVars out;
  const Var pooled = nn::block_mean_rows(g, u, group_.order);
  const Var hidden = nn::silu(g, nn::linear(g, pooled, p.get(g, atom_hidden_.w), p.get(g, atom_hidden_.b)));
  out.atom_logits = nn::linear(g, hidden, p.get(g, atom_out_.w), p.get(g, atom_out_.b));
  const Var cart_slots = glin(g, p, cart_out_, norm(g, p, cart_norm_, u));
  out.cart = nn::group_vector_project(g, cart_slots, group_.rotations);
  return out;
}

template class Platoformer<float>;
template class Platoformer<double>;

}  // namespace atomflow::equivariant
