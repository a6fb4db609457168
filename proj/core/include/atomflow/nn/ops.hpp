#pragma once

#include <span>
#include <vector>

#include "atomflow/nn/graph.hpp"

namespace atomflow::nn {

// Elementwise and structural ops. Shapes are checked and violations throw ShapeError.

template <typename T> Var add(Graph<T>& g, Var a, Var b);
template <typename T> Var sub(Graph<T>& g, Var a, Var b);
template <typename T> Var mul(Graph<T>& g, Var a, Var b);
template <typename T> Var scale(Graph<T>& g, Var a, T factor);
/// a (N x C) + row (1 x C) broadcast over rows.
template <typename T> Var add_row(Graph<T>& g, Var a, Var row);
template <typename T> Var matmul(Graph<T>& g, Var a, Var b);
/// x W (+ b). Pass an invalid Var for a bias-free map.
template <typename T> Var linear(Graph<T>& g, Var x, Var w, Var b = Var{});
template <typename T> Var silu(Graph<T>& g, Var a);
/// Per-row layer normalization with affine gamma/beta (1 x C each).
template <typename T> Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, T eps = T(1e-5));

/// 1 x C mean over rows.
template <typename T> Var mean_rows(Graph<T>& g, Var x);
/// Tiles a 1 x C row into rows x C.
template <typename T> Var broadcast_rows(Graph<T>& g, Var row, Eigen::Index rows);
/// out[i] = x[index[i]].
template <typename T> Var gather_rows(Graph<T>& g, Var x, std::vector<int> index);
/// Every row repeated `times` times consecutively: row n -> rows n*times .. n*times+times-1.
template <typename T> Var repeat_rows(Graph<T>& g, Var x, int times);
/// Inverse-shaped reduction of repeat_rows: averages consecutive blocks of `group` rows.
template <typename T> Var block_mean_rows(Graph<T>& g, Var x, int group);

/// Multi-head attention with per-head L2 query/key normalization and a learned per-head
/// temperature `scale` (1 x H): score = scale_h * <q/|q|, k/|k|>, softmax over keys.
/// Rows are laid out token-major with `groups` slots per token (row = n*groups + s); each
/// (head, slot) pair attends independently over tokens, so groups = 1 is ordinary MHA.
template <typename T>
Var attention(Graph<T>& g, Var q, Var k, Var v, Var scale, int heads, int groups = 1);

/// Mean over rows of -log softmax(logits)[target].
template <typename T> Var cross_entropy(Graph<T>& g, Var logits, std::span<const int> targets);
/// sum((pred - target)^2) / divisor.
template <typename T> Var squared_error(Graph<T>& g, Var pred, const Matrix<T>& target, T divisor);
/// sum(mask * |pred - target|) / divisor.
template <typename T>
Var masked_abs_error(Graph<T>& g, Var pred, const Matrix<T>& target, const Matrix<T>& mask, T divisor);
/// Weighted sum of 1x1 scalars.
template <typename T> Var weighted_sum(Graph<T>& g, std::span<const Var> terms, std::span<const T> weights);

// Group-structured ops on regular features stored as (N*|G|) x C with row n*|G| + s.

/// Group correlation out[n,s] = sum_h x[n, cayley[s][h]] W_h with W stacked as (|G|*Cin) x Cout.
template <typename T>
Var group_linear(Graph<T>& g, Var x, Var w_stack, const std::vector<std::vector<int>>& cayley);

/// (N*|G|) x 3 -> N x 3: (1/|G|) sum_s R_s x[n,s].
template <typename T>
Var group_vector_project(Graph<T>& g, Var x, const std::vector<Eigen::Matrix3d>& rotations);

}  // namespace atomflow::nn
