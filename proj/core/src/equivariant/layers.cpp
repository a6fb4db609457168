#include "atomflow/equivariant/layers.hpp"

#include <cmath>
#include <string>

#include "atomflow/errors.hpp"
#include "atomflow/nn/ops.hpp"

namespace atomflow::equivariant {

namespace {

void check_feature(const RegularFeature& f, const GroupTable& group, const char* what) {
  if (f.order != group.order || f.data.rows() != f.atoms * group.order)
    fail(ErrorKind::ShapeError, std::string(what) + ": feature does not match group order " +
                                    std::to_string(group.order));
}

RegularFeature wrap(Eigen::Index atoms, int order, RegularMatrix data) {
  RegularFeature f;
  f.atoms = atoms;
  f.order = order;
  f.data = std::move(data);
  return f;
}

}  // namespace

RegularFeature group_shift(const RegularFeature& f, const GroupTable& group, int h) {
  check_feature(f, group, "group_shift");
  RegularFeature out = f;
  const int h_inv = group.inverse(h);
  for (Eigen::Index n = 0; n < f.atoms; ++n)
    for (int g = 0; g < group.order; ++g) out.slot(n, g) = f.slot(n, group.multiply(h_inv, g));
  return out;
}

RegularFeature lift(const RegularMatrix& scalars, std::span<const Coords> vectors, const GroupTable& group) {
  if (scalars.cols() == 0 && vectors.empty()) fail(ErrorKind::ShapeError, "lift: no scalar or vector inputs");
  Eigen::Index n = scalars.cols() > 0 ? scalars.rows() : vectors.front().rows();
  for (const auto& v : vectors)
    if (v.rows() != n) fail(ErrorKind::ShapeError, "lift: vector rows differ from scalar rows");
  if (n < 1) fail(ErrorKind::ShapeError, "lift: no atoms");
  const Eigen::Index cs = scalars.cols();
  RegularMatrix data(n * group.order, cs + 3 * static_cast<Eigen::Index>(vectors.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int g = 0; g < group.order; ++g) {
      auto row = data.row(i * group.order + g);
      if (cs > 0) row.head(cs) = scalars.row(i);
      for (std::size_t b = 0; b < vectors.size(); ++b)
        row.segment(cs + 3 * static_cast<Eigen::Index>(b), 3) = vectors[b].row(i) * group.rotation(g);
    }
  }
  return wrap(n, group.order, std::move(data));
}

RegularFeature g_linear(const RegularFeature& f, const RegularMatrix& weights, const GroupTable& group) {
  check_feature(f, group, "g_linear");
  nn::Graph<double> g;
  const auto x = g.constant(f.data);
  const auto w = g.constant(weights);
  const auto y = nn::group_linear(g, x, w, group.cayley);
  return wrap(f.atoms, f.order, g.value(y));
}

RegularMatrix circulant_expand(const RegularMatrix& weights, const GroupTable& group) {
  const int order = group.order;
  if (weights.rows() % order != 0) fail(ErrorKind::ShapeError, "circulant_expand: rows not divisible by |G|");
  const Eigen::Index cin = weights.rows() / order;
  const Eigen::Index cout = weights.cols();
  RegularMatrix big(order * cin, order * cout);
  for (int hp = 0; hp < order; ++hp)
    for (int g = 0; g < order; ++g) {
      const int h = group.multiply(group.inverse(g), hp);
      big.block(hp * cin, g * cout, cin, cout) = weights.middleRows(h * cin, cin);
    }
  return big;
}

RegularFeature g_linear_dense(const RegularFeature& f, const RegularMatrix& weights, const GroupTable& group) {
  check_feature(f, group, "g_linear_dense");
  const RegularMatrix big = circulant_expand(weights, group);
  const Eigen::Index cin = f.channels();
  if (big.rows() != group.order * cin) fail(ErrorKind::ShapeError, "g_linear_dense: channel mismatch");
  const Eigen::Index cout = weights.cols();
  RegularMatrix out(f.data.rows(), cout);
  for (Eigen::Index n = 0; n < f.atoms; ++n) {
    const Eigen::Map<const Eigen::RowVectorXd> flat(f.data.data() + n * group.order * cin, group.order * cin);
    const Eigen::RowVectorXd y = flat * big;
    for (int g = 0; g < group.order; ++g) out.row(n * group.order + g) = y.segment(g * cout, cout);
  }
  return wrap(f.atoms, f.order, std::move(out));
}

std::int64_t g_linear_parameter_count(int order, std::int64_t cin, std::int64_t cout) { return order * cin * cout; }

std::int64_t dense_parameter_count(int order, std::int64_t cin, std::int64_t cout) {
  return static_cast<std::int64_t>(order) * order * cin * cout;
}

RegularFeature g_attention(const RegularFeature& f, const GAttentionWeights& w, int heads, const GroupTable& group) {
  check_feature(f, group, "g_attention");
  if (heads < 1 || f.channels() % heads != 0) fail(ErrorKind::ShapeError, "g_attention: channels not divisible by heads");
  nn::Graph<double> g;
  const auto x = g.constant(f.data);
  const auto q = nn::group_linear(g, x, g.constant(w.wq), group.cayley);
  const auto k = nn::group_linear(g, x, g.constant(w.wk), group.cayley);
  const auto v = nn::group_linear(g, x, g.constant(w.wv), group.cayley);
  const auto a = nn::attention(g, q, k, v, g.constant(w.scale), heads, group.order);
  const auto y = nn::group_linear(g, a, g.constant(w.wo), group.cayley);
  return wrap(f.atoms, f.order, g.value(y));
}

ChannelMode parse_channel_mode(std::string_view mode) {
  if (mode == "compute") return ChannelMode::Compute;
  if (mode == "parameter") return ChannelMode::Parameter;
  if (mode == "balanced") return ChannelMode::Balanced;
  fail(ErrorKind::ConfigError, "unknown channel mode '" + std::string(mode) + "'");
}

std::string_view to_string(ChannelMode mode) noexcept {
  switch (mode) {
    case ChannelMode::Compute: return "compute";
    case ChannelMode::Parameter: return "parameter";
    case ChannelMode::Balanced: return "balanced";
  }
  return "balanced";
}

int channel_match(int d_model, int order, ChannelMode mode, int heads) {
  if (order < 1 || heads < 1 || d_model < order)
    fail(ErrorKind::InfeasibleWidth, "channel_match: need d_model >= |G| >= 1 and heads >= 1");
  const double g = static_cast<double>(order);
  double raw = 0.0;
  switch (mode) {
    case ChannelMode::Compute: raw = d_model / g; break;
    case ChannelMode::Parameter: raw = d_model / std::sqrt(g); break;
    case ChannelMode::Balanced: raw = d_model / std::pow(g, 2.0 / 3.0); break;
  }
  const int c = static_cast<int>(std::floor(raw / heads)) * heads;
  if (c < heads)
    fail(ErrorKind::InfeasibleWidth, "channel_match: width " + std::to_string(raw) + " is below head count " +
                                         std::to_string(heads));
  return c;
}

ProjectedOutput project_out(const RegularFeature& f, const GroupTable& group, int scalar_channels, int vector_blocks) {
  check_feature(f, group, "project_out");
  if (scalar_channels < 0 || vector_blocks < 0 || scalar_channels + 3 * vector_blocks > f.channels())
    fail(ErrorKind::ShapeError, "project_out: channel split exceeds feature width");
  ProjectedOutput out;
  out.scalars = RegularMatrix::Zero(f.atoms, scalar_channels);
  out.vectors.assign(static_cast<std::size_t>(vector_blocks), Coords::Zero(f.atoms, 3));
  for (Eigen::Index n = 0; n < f.atoms; ++n)
    for (int g = 0; g < group.order; ++g) {
      const auto row = f.slot(n, g);
      out.scalars.row(n) += row.head(scalar_channels);
      for (int b = 0; b < vector_blocks; ++b)
        out.vectors[static_cast<std::size_t>(b)].row(n) +=
            (group.rotation(g) * row.segment(scalar_channels + 3 * b, 3).transpose()).transpose();
    }
  out.scalars /= static_cast<double>(group.order);
  for (auto& v : out.vectors) v /= static_cast<double>(group.order);
  return out;
}

}  // namespace atomflow::equivariant
