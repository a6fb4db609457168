#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atomflow/equivariant/group.hpp"
#include "atomflow/nn/graph.hpp"
#include "atomflow/system.hpp"

namespace atomflow::equivariant {

using RegularMatrix = nn::Matrix<double>;

/// Features over the regular representation: row n*order + g holds atom n at group slot g.
struct RegularFeature {
  Eigen::Index atoms = 0;
  int order = 0;
  RegularMatrix data;  // (atoms * order) x channels

  Eigen::Index channels() const { return data.cols(); }
  auto slot(Eigen::Index n, int g) { return data.row(n * order + g); }
  auto slot(Eigen::Index n, int g) const { return data.row(n * order + g); }
};

/// Regular action of element h: (L_h f)[g] = f[h^-1 g].
RegularFeature group_shift(const RegularFeature& f, const GroupTable& group, int h);

/// Scalars (N x Cs, may have zero columns) are copied to every slot; each vector set
/// (N x 3) adds three channels whose slot g holds R_g^T v. Channels: scalars first, then
/// vector blocks in order. Rotating the inputs by R_h shifts the result by L_h.
RegularFeature lift(const RegularMatrix& scalars, std::span<const Coords> vectors, const GroupTable& group);

/// Group correlation out[n, g] = sum_h f[n, g h] W_h; weights stacked as (|G| Cin) x Cout
/// with block h holding W_h.
RegularFeature g_linear(const RegularFeature& f, const RegularMatrix& weights, const GroupTable& group);

/// The same map as a dense (|G| Cin) x (|G| Cout) G-circulant matrix: block (h', g) = W_{g^-1 h'}.
RegularMatrix circulant_expand(const RegularMatrix& weights, const GroupTable& group);
/// g_linear evaluated through the dense circulant matrix.
RegularFeature g_linear_dense(const RegularFeature& f, const RegularMatrix& weights, const GroupTable& group);

std::int64_t g_linear_parameter_count(int order, std::int64_t cin, std::int64_t cout);
std::int64_t dense_parameter_count(int order, std::int64_t cin, std::int64_t cout);

struct GAttentionWeights {
  RegularMatrix wq, wk, wv, wo;  // each (|G| C) x C
  RegularMatrix scale;           // 1 x H
};

/// Self-attention with the group axis folded into the heads: every (head, slot) pair
/// attends over the N tokens; Q/K/V and the output map are g_linear.
RegularFeature g_attention(const RegularFeature& f, const GAttentionWeights& w, int heads, const GroupTable& group);

enum class ChannelMode { Compute, Parameter, Balanced };
ChannelMode parse_channel_mode(std::string_view mode);
std::string_view to_string(ChannelMode mode) noexcept;

/// Per-slot width C for model width D: compute D/|G|, parameter D/sqrt|G|, balanced
/// D/|G|^(2/3), floored to a positive multiple of `heads`.
int channel_match(int d_model, int order, ChannelMode mode, int heads);

struct ProjectedOutput {
  RegularMatrix scalars;       // N x Cs
  std::vector<Coords> vectors; // Cv sets of N x 3
};

/// Scalars: mean over the group axis of the first `scalar_channels` channels. Vectors:
/// (1/|G|) sum_g R_g f[g] over each of the next `vector_blocks` 3-channel blocks.
ProjectedOutput project_out(const RegularFeature& f, const GroupTable& group, int scalar_channels,
                            int vector_blocks);

}  // namespace atomflow::equivariant
