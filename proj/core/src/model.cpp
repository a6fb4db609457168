#include "atomflow/model.hpp"

#include <cmath>
#include <numbers>

#include "atomflow/errors.hpp"
#include "atomflow/nn/ops.hpp"

namespace atomflow {

using nn::Var;

std::string_view to_string(AuxHead head) noexcept {
  switch (head) {
    case AuxHead::Props: return "props";
    case AuxHead::Energy: return "energy";
    case AuxHead::Forces: return "forces";
  }
  return "props";
}

void TftConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::ConfigError, msg); };
  if (d_model < 1 || num_heads < 1) bad("d_model and num_heads must be positive");
  if (d_model % num_heads != 0) bad("d_model must be divisible by num_heads");
  if (num_trunk_layers < 1) bad("num_trunk_layers must be >= 1");
  if (num_aux_layers < 0) bad("num_aux_layers must be >= 0");
  if (tap_layer < 1 || tap_layer > num_trunk_layers)
    fail(ErrorKind::TapOutOfRange, "tap_layer must lie in [1, num_trunk_layers]");
  if (num_atom_types < 2 || num_atom_types > 118) bad("num_atom_types must lie in [2, 118]");
  if (num_properties < 1) bad("num_properties must be >= 1");
  if (ffn_multiplier < 1) bad("ffn_multiplier must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) bad("time_embed_dim must be even");
  if (!(class_dropout_prob >= 0.0 && class_dropout_prob <= 1.0)) bad("class_dropout_prob must lie in [0, 1]");
}

Eigen::RowVectorXd sinusoidal_time_code(double t, int dim) {
  const int half = dim / 2;
  Eigen::RowVectorXd code(dim);
  const double scaled = 1000.0 * t;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    code[i] = std::sin(scaled * freq);
    code[half + i] = std::cos(scaled * freq);
  }
  return code;
}

namespace {

struct LayoutBuilder {
  nn::ParameterLayout& layout;
  std::vector<std::size_t>& zero;
  std::vector<std::size_t>& unit;
  std::vector<std::size_t>& scale;

  std::size_t weight(const std::string& name, int rows, int cols) { return layout.add(name, rows, cols); }
  std::size_t zeros(const std::string& name, int rows, int cols) {
    const auto i = layout.add(name, rows, cols);
    zero.push_back(i);
    return i;
  }
  detail::NormIdx norm(const std::string& prefix, int width) {
    detail::NormIdx idx;
    idx.gamma = layout.add(prefix + ".gamma", 1, width);
    unit.push_back(idx.gamma);
    idx.beta = zeros(prefix + ".beta", 1, width);
    return idx;
  }
  detail::LinearIdx linear(const std::string& prefix, int in, int out, bool bias, bool zero_weight = false) {
    detail::LinearIdx idx;
    idx.w = zero_weight ? zeros(prefix + ".w", in, out) : weight(prefix + ".w", in, out);
    idx.has_bias = bias;
    if (bias) idx.b = zeros(prefix + ".b", 1, out);
    return idx;
  }
  detail::AttnIdx attention(const std::string& prefix, int width, int heads) {
    detail::AttnIdx idx;
    idx.wq = weight(prefix + ".wq", width, width);
    idx.wk = weight(prefix + ".wk", width, width);
    idx.wv = weight(prefix + ".wv", width, width);
    idx.wo = weight(prefix + ".wo", width, width);
    idx.scale = layout.add(prefix + ".scale", 1, heads);
    scale.push_back(idx.scale);
    return idx;
  }
  detail::FfnIdx ffn(const std::string& prefix, int width, int hidden) {
    detail::FfnIdx idx;
    idx.gate = weight(prefix + ".gate", width, hidden);
    idx.up = weight(prefix + ".up", width, hidden);
    idx.down = weight(prefix + ".down", hidden, width);
    return idx;
  }
  detail::EncoderIdx encoder(const std::string& prefix, int width, int heads, int hidden) {
    detail::EncoderIdx idx;
    idx.ln1 = norm(prefix + ".ln1", width);
    idx.attn = attention(prefix + ".attn", width, heads);
    idx.ln2 = norm(prefix + ".ln2", width);
    idx.ffn = ffn(prefix + ".ffn", width, hidden);
    return idx;
  }
  detail::DecoderIdx decoder(const std::string& prefix, int width, int heads, int hidden) {
    detail::DecoderIdx idx;
    idx.ln_q = norm(prefix + ".ln_q", width);
    idx.ln_kv = norm(prefix + ".ln_kv", width);
    idx.attn = attention(prefix + ".attn", width, heads);
    idx.ln2 = norm(prefix + ".ln2", width);
    idx.ffn = ffn(prefix + ".ffn", width, hidden);
    return idx;
  }
};

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

template <typename T>
FlowTransformer<T>::FlowTransformer(TftConfig config) : config_(config) {
  config_.validate();
  const int d = config_.d_model;
  const int h = config_.num_heads;
  const int f = config_.ffn_hidden();
  const int v = config_.num_atom_types;
  LayoutBuilder b{layout_, zero_init_, unit_init_, scale_init_};

  atom_embed_ = b.weight("embed.atom", v, d);
  class_embed_ = b.weight("embed.class", 3, d);
  time_proj_ = b.linear("embed.time", config_.time_embed_dim, d, true);
  cart_proj_ = b.linear("embed.cart", 3, d, false);
  frac_proj_ = b.linear("embed.frac", 3, d, false);
  len_proj_ = b.linear("embed.len", 3, d, false);
  ang_proj_ = b.linear("embed.ang", 3, d, false);

  for (int i = 0; i < config_.num_trunk_layers; ++i) trunk_.push_back(b.encoder("trunk." + std::to_string(i), d, h, f));
  trunk_norm_ = b.norm("trunk.norm", d);

  denoise_decoder_ = b.decoder("denoise.decoder", d, h, f);
  const std::array<const char*, 5> names = {"atom", "cart", "frac", "len", "ang"};
  for (std::size_t i = 0; i < names.size(); ++i)
    adapters_[i] = b.linear(std::string("denoise.adapter.") + names[i], d, d, true);
  atom_hidden_ = b.linear("denoise.atom.hidden", d, d, true);
  atom_out_ = b.linear("denoise.atom.out", d, v, true, true);
  cart_norm_ = b.norm("denoise.cart.norm", d);
  cart_out_ = b.linear("denoise.cart.out", d, 3, false, true);
  frac_norm_ = b.norm("denoise.frac.norm", d);
  frac_out_ = b.linear("denoise.frac.out", d, 3, false, true);
  len_norm_ = b.norm("denoise.len.norm", d);
  len_out_ = b.linear("denoise.len.out", d, 3, false, true);
  ang_norm_ = b.norm("denoise.ang.norm", d);
  ang_out_ = b.linear("denoise.ang.out", d, 3, false, true);

  for (AuxHead head : kAuxHeads) {
    auto& stack = aux_[static_cast<std::size_t>(head)];
    const std::string prefix = "aux." + std::string(to_string(head));
    stack.decoder = b.decoder(prefix + ".decoder", d, h, f);
    for (int j = 0; j < config_.num_aux_layers; ++j)
      stack.layers.push_back(b.encoder(prefix + ".layer." + std::to_string(j), d, h, f));
    stack.final_norm = b.norm(prefix + ".norm", d);
    switch (head) {
      case AuxHead::Props: stack.out = b.linear(prefix + ".out", d, config_.num_properties, true, true); break;
      case AuxHead::Energy: stack.out = b.linear(prefix + ".out", d, 1, true, true); break;
      case AuxHead::Forces: stack.out = b.linear(prefix + ".out", d, 3, false, true); break;
    }
  }
}

template <typename T>
void FlowTransformer<T>::init_parameters(nn::ParameterStore<T>& store, RngStream& rng) const {
  if (store.size() != layout_.size()) fail(ErrorKind::ConfigMismatch, "store does not match model layout");
  for (std::size_t i = 0; i < store.size(); ++i) nn::fill_truncated_normal(store.value(i), 0.02, rng);
  for (auto i : zero_init_) store.value(i).setZero();
  for (auto i : unit_init_) store.value(i).setOnes();
  const T s = static_cast<T>(std::sqrt(static_cast<double>(config_.head_dim())));
  for (auto i : scale_init_) store.value(i).setConstant(s);
}

template <typename T>
bool FlowTransformer<T>::is_denoiser_tensor(const std::string& name) const {
  return starts_with(name, "embed.") || starts_with(name, "trunk.") || starts_with(name, "denoise.");
}

template <typename T>
bool FlowTransformer<T>::is_aux_tensor(const std::string& name, AuxHead head) const {
  return starts_with(name, "aux." + std::string(to_string(head)) + ".");
}

template <typename T>
Var FlowTransformer<T>::norm(nn::Graph<T>& g, const Binding& p, const detail::NormIdx& idx, Var x) const {
  return nn::layer_norm(g, x, p.get(g, idx.gamma), p.get(g, idx.beta));
}

template <typename T>
Var FlowTransformer<T>::lin(nn::Graph<T>& g, const Binding& p, const detail::LinearIdx& idx, Var x) const {
  return nn::linear(g, x, p.get(g, idx.w), idx.has_bias ? p.get(g, idx.b) : Var{});
}

template <typename T>
Var FlowTransformer<T>::encoder_block(nn::Graph<T>& g, const Binding& p, const detail::EncoderIdx& idx, Var x) const {
  const Var a = norm(g, p, idx.ln1, x);
  const Var q = nn::matmul(g, a, p.get(g, idx.attn.wq));
  const Var k = nn::matmul(g, a, p.get(g, idx.attn.wk));
  const Var v = nn::matmul(g, a, p.get(g, idx.attn.wv));
  const Var att = nn::attention(g, q, k, v, p.get(g, idx.attn.scale), config_.num_heads);
  x = nn::add(g, x, nn::matmul(g, att, p.get(g, idx.attn.wo)));
  const Var b = norm(g, p, idx.ln2, x);
  const Var gate = nn::silu(g, nn::matmul(g, b, p.get(g, idx.ffn.gate)));
  const Var up = nn::matmul(g, b, p.get(g, idx.ffn.up));
  return nn::add(g, x, nn::matmul(g, nn::mul(g, gate, up), p.get(g, idx.ffn.down)));
}

template <typename T>
Var FlowTransformer<T>::decoder_block(nn::Graph<T>& g, const Binding& p, const detail::DecoderIdx& idx, Var queries,
                                      Var memory) const {
  const Var hq = norm(g, p, idx.ln_q, queries);
  const Var zk = norm(g, p, idx.ln_kv, memory);
  const Var q = nn::matmul(g, hq, p.get(g, idx.attn.wq));
  const Var k = nn::matmul(g, zk, p.get(g, idx.attn.wk));
  const Var v = nn::matmul(g, zk, p.get(g, idx.attn.wv));
  const Var att = nn::attention(g, q, k, v, p.get(g, idx.attn.scale), config_.num_heads);
  Var x = nn::add(g, queries, nn::matmul(g, att, p.get(g, idx.attn.wo)));
  const Var b = norm(g, p, idx.ln2, x);
  const Var gate = nn::silu(g, nn::matmul(g, b, p.get(g, idx.ffn.gate)));
  const Var up = nn::matmul(g, b, p.get(g, idx.ffn.up));
  return nn::add(g, x, nn::matmul(g, nn::mul(g, gate, up), p.get(g, idx.ffn.down)));
}

template <typename T>
Var FlowTransformer<T>::embed_inputs(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                                     RngStream* dropout_rng, bool* dropped) const {
  const int n = state.num_atoms();
  if (n < 1) fail(ErrorKind::ShapeError, "embed_inputs: no atoms");
  for (int a : state.noisy_types)
    if (a < 0 || a >= config_.num_atom_types) fail(ErrorKind::ShapeError, "embed_inputs: atom type outside vocabulary");

  bool drop = false;
  if (dropout_rng) drop = dropout_rng->uniform() < config_.class_dropout_prob;
  if (dropped) *dropped = drop;
  const int cls = drop ? static_cast<int>(ClassLabel::Null) : static_cast<int>(label);

  const bool material = state.is_material();
  const bool molecule = !material;
  // Inputs of the inactive domain are multiplied by a zero indicator.
  Mat cart = Mat::Zero(n, 3);
  Mat frac = Mat::Zero(n, 3);
  Mat len = Mat::Zero(1, 3);
  Mat ang = Mat::Zero(1, 3);
  if (molecule && state.noisy_cart) {
    if (state.noisy_cart->rows() != n) fail(ErrorKind::ShapeError, "embed_inputs: cart rows != N");
    cart = state.noisy_cart->template cast<T>();
  }
  if (material) {
    if (!state.noisy_frac || !state.noisy_lengths || !state.noisy_angles)
      fail(ErrorKind::ShapeError, "embed_inputs: material state missing periodic inputs");
    if (state.noisy_frac->rows() != n) fail(ErrorKind::ShapeError, "embed_inputs: frac rows != N");
    frac = state.noisy_frac->template cast<T>();
    len = state.noisy_lengths->transpose().template cast<T>();
    ang = state.noisy_angles->transpose().template cast<T>();
  }

  const Var atom = nn::gather_rows(g, p.get(g, atom_embed_), state.noisy_types);
  const Var cls_row = nn::gather_rows(g, p.get(g, class_embed_), {cls});
  const Mat time_code = sinusoidal_time_code(state.t, config_.time_embed_dim).template cast<T>();
  const Var time_row = lin(g, p, time_proj_, g.constant(time_code));
  Var row = nn::add(g, cls_row, time_row);
  row = nn::add(g, row, lin(g, p, len_proj_, g.constant(std::move(len))));
  row = nn::add(g, row, lin(g, p, ang_proj_, g.constant(std::move(ang))));

  Var h = nn::add(g, atom, lin(g, p, cart_proj_, g.constant(std::move(cart))));
  h = nn::add(g, h, lin(g, p, frac_proj_, g.constant(std::move(frac))));
  return nn::add_row(g, h, row);
}

template <typename T>
TrunkVars FlowTransformer<T>::trunk_forward(nn::Graph<T>& g, const Binding& p, Var h) const {
  TrunkVars out;
  out.input_embeddings = h;
  Var x = h;
  Var tap_raw{};
  for (int i = 0; i < config_.num_trunk_layers; ++i) {
    x = encoder_block(g, p, trunk_[static_cast<std::size_t>(i)], x);
    if (i + 1 == config_.tap_layer) tap_raw = x;
  }
  if (!g.value(x).allFinite()) fail(ErrorKind::NonFiniteActivation, "trunk produced non-finite activations");
  out.z_final = norm(g, p, trunk_norm_, x);
  out.z_tap = config_.tap_layer == config_.num_trunk_layers ? out.z_final : norm(g, p, trunk_norm_, tap_raw);
  return out;
}

template <typename T>
DenoiseVars FlowTransformer<T>::denoise_decode(nn::Graph<T>& g, const Binding& p, const TrunkVars& trunk) const {
  const Var u = decoder_block(g, p, denoise_decoder_, trunk.input_embeddings, trunk.z_final);
  const Var ha = lin(g, p, adapters_[0], u);
  const Var hx = lin(g, p, adapters_[1], u);
  const Var hf = lin(g, p, adapters_[2], u);
  const Var hl = lin(g, p, adapters_[3], u);
  const Var hg = lin(g, p, adapters_[4], u);

  DenoiseVars out;
  out.atom_logits = lin(g, p, atom_out_, nn::silu(g, lin(g, p, atom_hidden_, ha)));
  out.cart = lin(g, p, cart_out_, norm(g, p, cart_norm_, hx));
  out.frac = lin(g, p, frac_out_, norm(g, p, frac_norm_, hf));
  out.lengths = lin(g, p, len_out_, norm(g, p, len_norm_, nn::mean_rows(g, hl)));
  out.angles = lin(g, p, ang_out_, norm(g, p, ang_norm_, nn::mean_rows(g, hg)));
  return out;
}

template <typename T>
Var FlowTransformer<T>::aux_decode(nn::Graph<T>& g, const Binding& p, const TrunkVars& trunk, AuxHead head) const {
  const auto& stack = aux_[static_cast<std::size_t>(head)];
  Var x = decoder_block(g, p, stack.decoder, trunk.input_embeddings, trunk.z_tap);
  for (const auto& layer : stack.layers) x = encoder_block(g, p, layer, x);
  x = norm(g, p, stack.final_norm, x);
  if (head == AuxHead::Forces) return lin(g, p, stack.out, x);
  return lin(g, p, stack.out, nn::mean_rows(g, x));
}

template <typename T>
ForwardVars FlowTransformer<T>::forward(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                                        const ForwardFlags& flags, RngStream* dropout_rng) const {
  ForwardVars out;
  const Var h = embed_inputs(g, p, state, label, dropout_rng);
  out.trunk = trunk_forward(g, p, h);
  if (flags.denoise) out.denoise = denoise_decode(g, p, out.trunk);
  if (flags.props) out.aux.props = aux_decode(g, p, out.trunk, AuxHead::Props);
  if (flags.energy) out.aux.energy = aux_decode(g, p, out.trunk, AuxHead::Energy);
  if (flags.forces) out.aux.forces = aux_decode(g, p, out.trunk, AuxHead::Forces);
  return out;
}

template <typename T>
DenoiseVars FlowTransformer<T>::denoise(nn::Graph<T>& g, const Binding& p, const FlowState& state, ClassLabel label,
                                       RngStream* dropout_rng) const {
  return denoise_decode(g, p, trunk_forward(g, p, embed_inputs(g, p, state, label, dropout_rng)));
}

template <typename T>
AuxOutput FlowTransformer<T>::predict_aux(const nn::ParameterStore<T>& store, const FlowState& state, ClassLabel label,
                                          const ForwardFlags& flags) const {
  nn::Graph<T> g;
  const Binding p{&store, nullptr, nullptr};
  ForwardFlags f = flags;
  f.denoise = false;
  const auto fw = forward(g, p, state, label, f);
  AuxOutput out;
  if (f.props) out.props = g.value(fw.aux.props).row(0).transpose().template cast<double>();
  if (f.energy) out.energy = static_cast<double>(g.scalar(fw.aux.energy));
  if (f.forces) out.forces = g.value(fw.aux.forces).template cast<double>();
  return out;
}

template class FlowTransformer<float>;
template class FlowTransformer<double>;

}  // namespace atomflow
