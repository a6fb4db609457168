#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>

namespace atomflow::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node of a Graph.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense row-major matrices. Nodes are appended during the forward
/// pass; backward() walks them in reverse and pushes gradients into parents and into the
/// gradient sinks of parameter leaves. A graph is single-use and single-threaded.
template <typename T>
class Graph {
 public:
  using Mat = Matrix<T>;
  using BackwardFn = std::function<void(Graph&, const Mat& out_grad)>;

  Var constant(Mat value);
  /// Leaf that borrows `value`; gradients are added into `grad_sink` (frozen when null).
  Var parameter(const Mat& value, Mat* grad_sink);
  /// Leaf that owns its value and keeps its gradient readable through grad().
  Var input(Mat value);

  Var record(Mat value, bool requires_grad, BackwardFn fn);

  const Mat& value(Var v) const { return node(v).view(); }
  /// Empty matrix when no gradient reached the node.
  const Mat& grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  T scalar(Var v) const { return value(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = seed; root must be 1x1.
  void backward(Var root, T seed = T(1));

 private:
  struct Node {
    Mat own;
    const Mat* borrowed = nullptr;
    Mat grad;
    Mat* sink = nullptr;
    bool requires_grad = false;
    bool keep_grad = false;
    BackwardFn fn;
    const Mat& view() const { return borrowed ? *borrowed : own; }
  };

  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

  std::deque<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace atomflow::nn
