#include "atomflow/nn/graph.hpp"

#include "atomflow/errors.hpp"

namespace atomflow::nn {

template <typename T>
Var Graph<T>::constant(Mat value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::parameter(const Mat& value, Mat* grad_sink) {
  Node n;
  n.borrowed = &value;
  n.sink = grad_sink;
  n.requires_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::input(Mat value) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = true;
  n.keep_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::record(Mat value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
void Graph<T>::backward(Var root, T seed) {
  Node& r = nodes_[static_cast<std::size_t>(root.id)];
  if (r.view().rows() != 1 || r.view().cols() != 1) fail(ErrorKind::ShapeError, "backward() needs a scalar root");
  if (!r.requires_grad) return;
  r.grad = Mat::Constant(1, 1, seed);
  for (auto id = static_cast<std::ptrdiff_t>(root.id); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.fn) {
      n.fn(*this, n.grad);
    }
    if (n.sink) {
      if (n.sink->size() == 0) {
        *n.sink = n.grad;
      } else {
        *n.sink += n.grad;
      }
    }
    // Interior gradients are dead once propagated.
    if (!n.keep_grad && !n.sink) n.grad.resize(0, 0);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace atomflow::nn
