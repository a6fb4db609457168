#include "atomflow/nn/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "atomflow/errors.hpp"

namespace atomflow::nn {
namespace {

template <typename T>
using Mat = Matrix<T>;

template <typename T>
using ConstStrided = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using Strided = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(ErrorKind::ShapeError, std::string(op) + ": " + detail);
}

template <typename T>
std::string dims(const Mat<T>& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

template <typename T>
bool any_grad(const Graph<T>& g, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (v.valid() && g.requires_grad(v)) return true;
  return false;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("add", dims<T>(av) + " vs " + dims<T>(bv));
  Mat<T> out = av + bv;
  return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("sub", dims<T>(av) + " vs " + dims<T>(bv));
  Mat<T> out = av - bv;
  return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(b)) gr.accumulate(b, -go);
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("mul", dims<T>(av) + " vs " + dims<T>(bv));
  Mat<T> out = av.cwiseProduct(bv);
  return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, const Mat<T>& go) {
    if (gr.requires_grad(a)) gr.accumulate(a, go.cwiseProduct(gr.value(b)));
    if (gr.requires_grad(b)) gr.accumulate(b, go.cwiseProduct(gr.value(a)));
  });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T factor) {
  Mat<T> out = g.value(a) * factor;
  return g.record(std::move(out), any_grad(g, {a}),
                  [a, factor](Graph<T>& gr, const Mat<T>& go) { gr.accumulate(a, go * factor); });
}

template <typename T>
Var add_row(Graph<T>& g, Var a, Var row) {
  const auto& av = g.value(a);
  const auto& rv = g.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", dims<T>(av) + " + " + dims<T>(rv));
  Mat<T> out = av.rowwise() + rv.row(0);
  return g.record(std::move(out), any_grad(g, {a, row}), [a, row](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(row)) gr.accumulate(row, go.colwise().sum());
  });
}

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.cols() != bv.rows()) shape_error("matmul", dims<T>(av) + " x " + dims<T>(bv));
  Mat<T> out = av * bv;
  return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, const Mat<T>& go) {
    if (gr.requires_grad(a)) gr.accumulate(a, go * gr.value(b).transpose());
    if (gr.requires_grad(b)) gr.accumulate(b, gr.value(a).transpose() * go);
  });
}

template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const auto& xv = g.value(x);
  const auto& wv = g.value(w);
  if (xv.cols() != wv.rows()) shape_error("linear", dims<T>(xv) + " x " + dims<T>(wv));
  Mat<T> out = xv * wv;
  if (b.valid()) {
    const auto& bv = g.value(b);
    if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("linear", "bias " + dims<T>(bv));
    out.rowwise() += bv.row(0);
  }
  return g.record(std::move(out), any_grad(g, {x, w, b}), [x, w, b](Graph<T>& gr, const Mat<T>& go) {
    if (gr.requires_grad(x)) gr.accumulate(x, go * gr.value(w).transpose());
    if (gr.requires_grad(w)) gr.accumulate(w, gr.value(x).transpose() * go);
    if (b.valid() && gr.requires_grad(b)) gr.accumulate(b, go.colwise().sum());
  });
}

template <typename T>
Var silu(Graph<T>& g, Var a) {
  const auto& av = g.value(a);
  Mat<T> out = av.unaryExpr([](T v) { return v * sigmoid(v); });
  return g.record(std::move(out), any_grad(g, {a}), [a](Graph<T>& gr, const Mat<T>& go) {
    const auto& av2 = gr.value(a);
    Mat<T> d = av2.unaryExpr([](T v) {
      const T s = sigmoid(v);
      return s * (T(1) + v * (T(1) - s));
    });
    gr.accumulate(a, go.cwiseProduct(d));
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = g.value(x);
  const auto& gv = g.value(gamma);
  const auto& bv = g.value(beta);
  const auto c = xv.cols();
  if (gv.rows() != 1 || gv.cols() != c || bv.rows() != 1 || bv.cols() != c)
    shape_error("layer_norm", dims<T>(xv) + " with gamma " + dims<T>(gv));
  auto xhat = std::make_shared<Mat<T>>(xv.rows(), c);
  auto inv_std = std::make_shared<Eigen::Matrix<T, Eigen::Dynamic, 1>>(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const T mean = xv.row(i).mean();
    const T var = (xv.row(i).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (xv.row(i).array() - mean) * is;
  }
  Mat<T> out = (xhat->array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
  return g.record(std::move(out), any_grad(g, {x, gamma, beta}),
                  [x, gamma, beta, xhat, inv_std](Graph<T>& gr, const Mat<T>& go) {
                    if (gr.requires_grad(gamma)) gr.accumulate(gamma, go.cwiseProduct(*xhat).colwise().sum());
                    if (gr.requires_grad(beta)) gr.accumulate(beta, go.colwise().sum());
                    if (!gr.requires_grad(x)) return;
                    const auto& gam = gr.value(gamma);
                    Mat<T> dxhat = go.array().rowwise() * gam.row(0).array();
                    Mat<T> dx(go.rows(), go.cols());
                    for (Eigen::Index i = 0; i < go.rows(); ++i) {
                      const T m1 = dxhat.row(i).mean();
                      const T m2 = dxhat.row(i).cwiseProduct(xhat->row(i)).mean();
                      dx.row(i) = (dxhat.row(i).array() - m1 - xhat->row(i).array() * m2) * (*inv_std)(i);
                    }
                    gr.accumulate(x, dx);
                  });
}

template <typename T>
Var mean_rows(Graph<T>& g, Var x) {
  const auto& xv = g.value(x);
  if (xv.rows() == 0) shape_error("mean_rows", "empty input");
  Mat<T> out = xv.colwise().mean();
  const auto n = xv.rows();
  return g.record(std::move(out), any_grad(g, {x}), [x, n](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(x, go.replicate(n, 1) / static_cast<T>(n));
  });
}

template <typename T>
Var broadcast_rows(Graph<T>& g, Var row, Eigen::Index rows) {
  const auto& rv = g.value(row);
  if (rv.rows() != 1) shape_error("broadcast_rows", "expected a single row, got " + dims<T>(rv));
  Mat<T> out = rv.replicate(rows, 1);
  return g.record(std::move(out), any_grad(g, {row}),
                  [row](Graph<T>& gr, const Mat<T>& go) { gr.accumulate(row, go.colwise().sum()); });
}

template <typename T>
Var gather_rows(Graph<T>& g, Var x, std::vector<int> index) {
  const auto& xv = g.value(x);
  Mat<T> out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= xv.rows()) shape_error("gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(index[i]);
  }
  const auto src_rows = xv.rows();
  return g.record(std::move(out), any_grad(g, {x}),
                  [x, index = std::move(index), src_rows](Graph<T>& gr, const Mat<T>& go) {
                    Mat<T> dx = Mat<T>::Zero(src_rows, go.cols());
                    for (std::size_t i = 0; i < index.size(); ++i) dx.row(index[i]) += go.row(static_cast<Eigen::Index>(i));
                    gr.accumulate(x, dx);
                  });
}

template <typename T>
Var repeat_rows(Graph<T>& g, Var x, int times) {
  const auto& xv = g.value(x);
  Mat<T> out(xv.rows() * times, xv.cols());
  for (Eigen::Index n = 0; n < xv.rows(); ++n)
    for (int s = 0; s < times; ++s) out.row(n * times + s) = xv.row(n);
  return g.record(std::move(out), any_grad(g, {x}), [x, times](Graph<T>& gr, const Mat<T>& go) {
    const auto n = go.rows() / times;
    Mat<T> dx = Mat<T>::Zero(n, go.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      for (int s = 0; s < times; ++s) dx.row(i) += go.row(i * times + s);
    gr.accumulate(x, dx);
  });
}

template <typename T>
Var block_mean_rows(Graph<T>& g, Var x, int group) {
  const auto& xv = g.value(x);
  if (xv.rows() % group != 0) shape_error("block_mean_rows", "row count not divisible by group size");
  const auto n = xv.rows() / group;
  Mat<T> out = Mat<T>::Zero(n, xv.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (int s = 0; s < group; ++s) out.row(i) += xv.row(i * group + s);
  out /= static_cast<T>(group);
  return g.record(std::move(out), any_grad(g, {x}), [x, group](Graph<T>& gr, const Mat<T>& go) {
    Mat<T> dx(go.rows() * group, go.cols());
    for (Eigen::Index i = 0; i < go.rows(); ++i)
      for (int s = 0; s < group; ++s) dx.row(i * group + s) = go.row(i) / static_cast<T>(group);
    gr.accumulate(x, dx);
  });
}

namespace {

template <typename T>
struct AttentionCache {
  // Indexed by slot * heads + head.
  std::vector<Mat<T>> qhat, khat, probs;
  std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> qnorm, knorm;
};

template <typename T>
void normalize_rows(const ConstStrided<T>& in, Mat<T>& out, Eigen::Matrix<T, Eigen::Dynamic, 1>& norms) {
  constexpr T kEps = T(1e-12);
  out.resize(in.rows(), in.cols());
  norms.resize(in.rows());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const T n = std::sqrt(in.row(i).squaredNorm() + kEps);
    norms(i) = n;
    out.row(i) = in.row(i) / n;
  }
}

// Backward through x -> x / sqrt(|x|^2 + eps), row-wise.
template <typename T>
Mat<T> normalize_rows_backward(const Mat<T>& xhat, const Eigen::Matrix<T, Eigen::Dynamic, 1>& norms,
                               const Mat<T>& dxhat) {
  Mat<T> dx(xhat.rows(), xhat.cols());
  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
    const T proj = xhat.row(i).dot(dxhat.row(i));
    dx.row(i) = (dxhat.row(i) - xhat.row(i) * proj) / norms(i);
  }
  return dx;
}

}  // namespace

template <typename T>
Var attention(Graph<T>& g, Var q, Var k, Var v, Var scale_var, int heads, int groups) {
  const auto& qv = g.value(q);
  const auto& kv = g.value(k);
  const auto& vv = g.value(v);
  const auto& sv = g.value(scale_var);
  const auto c = qv.cols();
  if (heads < 1 || c % heads != 0) shape_error("attention", "channels not divisible by heads");
  if (kv.cols() != c || vv.cols() != c || kv.rows() != vv.rows()) shape_error("attention", "q/k/v width mismatch");
  if (qv.rows() % groups != 0 || kv.rows() % groups != 0) shape_error("attention", "rows not divisible by groups");
  if (sv.rows() != 1 || sv.cols() != heads) shape_error("attention", "scale must be 1 x heads");
  const Eigen::Index nq = qv.rows() / groups;
  const Eigen::Index nk = kv.rows() / groups;
  const Eigen::Index dh = c / heads;
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(groups) * c);

  auto cache = std::make_shared<AttentionCache<T>>();
  const auto slots = static_cast<std::size_t>(groups * heads);
  cache->qhat.resize(slots);
  cache->khat.resize(slots);
  cache->probs.resize(slots);
  cache->qnorm.resize(slots);
  cache->knorm.resize(slots);

  Mat<T> out(qv.rows(), c);
  for (int s = 0; s < groups; ++s) {
    for (int h = 0; h < heads; ++h) {
      const auto idx = static_cast<std::size_t>(s * heads + h);
      const Eigen::Index off = s * c + h * dh;
      ConstStrided<T> qs(qv.data() + off, nq, dh, stride);
      ConstStrided<T> ks(kv.data() + off, nk, dh, stride);
      ConstStrided<T> vs(vv.data() + off, nk, dh, stride);
      normalize_rows<T>(qs, cache->qhat[idx], cache->qnorm[idx]);
      normalize_rows<T>(ks, cache->khat[idx], cache->knorm[idx]);
      Mat<T> scores = (cache->qhat[idx] * cache->khat[idx].transpose()) * sv(0, h);
      for (Eigen::Index i = 0; i < nq; ++i) {
        const T m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      Strided<T> os(out.data() + off, nq, dh, stride);
      os.noalias() = scores * vs;
      cache->probs[idx] = std::move(scores);
    }
  }

  return g.record(
      std::move(out), any_grad(g, {q, k, v, scale_var}),
      [q, k, v, scale_var, heads, groups, nq, nk, dh, c, cache](Graph<T>& gr, const Mat<T>& go) {
        const auto& vv2 = gr.value(v);
        const auto& sv2 = gr.value(scale_var);
        const bool need_q = gr.requires_grad(q);
        const bool need_k = gr.requires_grad(k);
        const bool need_v = gr.requires_grad(v);
        const bool need_s = gr.requires_grad(scale_var);
        Mat<T> dq = need_q ? Mat<T>::Zero(nq * groups, c) : Mat<T>();
        Mat<T> dk = need_k ? Mat<T>::Zero(nk * groups, c) : Mat<T>();
        Mat<T> dv = need_v ? Mat<T>::Zero(nk * groups, c) : Mat<T>();
        Mat<T> ds = Mat<T>::Zero(1, heads);
        const Eigen::OuterStride<> stride2(static_cast<Eigen::Index>(groups) * c);
        for (int s = 0; s < groups; ++s) {
          for (int h = 0; h < heads; ++h) {
            const auto idx = static_cast<std::size_t>(s * heads + h);
            const Eigen::Index off = s * c + h * dh;
            ConstStrided<T> gos(go.data() + off, nq, dh, stride2);
            ConstStrided<T> vs(vv2.data() + off, nk, dh, stride2);
            const Mat<T>& p = cache->probs[idx];
            if (need_v) {
              Strided<T> dvs(dv.data() + off, nk, dh, stride2);
              dvs.noalias() += p.transpose() * gos;
            }
            if (!(need_q || need_k || need_s)) continue;
            const Mat<T> dp = gos * vs.transpose();
            Mat<T> dscore = p.cwiseProduct(dp);
            const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = dscore.rowwise().sum();
            dscore -= p.cwiseProduct(rowdot.replicate(1, nk));
            const T sc = sv2(0, h);
            const Mat<T>& qh = cache->qhat[idx];
            const Mat<T>& kh = cache->khat[idx];
            if (need_s) ds(0, h) += dscore.cwiseProduct(qh * kh.transpose()).sum();
            if (need_q) {
              const Mat<T> dqh = (dscore * kh) * sc;
              Strided<T> dqs(dq.data() + off, nq, dh, stride2);
              dqs += normalize_rows_backward<T>(qh, cache->qnorm[idx], dqh);
            }
            if (need_k) {
              const Mat<T> dkh = (dscore.transpose() * qh) * sc;
              Strided<T> dks(dk.data() + off, nk, dh, stride2);
              dks += normalize_rows_backward<T>(kh, cache->knorm[idx], dkh);
            }
          }
        }
        if (need_q) gr.accumulate(q, dq);
        if (need_k) gr.accumulate(k, dk);
        if (need_v) gr.accumulate(v, dv);
        if (need_s) gr.accumulate(scale_var, ds);
      });
}

template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, std::span<const int> targets) {
  const auto& lv = g.value(logits);
  if (lv.rows() != static_cast<Eigen::Index>(targets.size()) || lv.rows() == 0)
    shape_error("cross_entropy", "logit rows != target count");
  auto softmax = std::make_shared<Mat<T>>(lv.rows(), lv.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0 || tgt >= lv.cols()) shape_error("cross_entropy", "target class out of range");
    const T m = lv.row(i).maxCoeff();
    const auto ex = (lv.row(i).array() - m).exp();
    const T z = ex.sum();
    softmax->row(i) = ex / z;
    total += (std::log(z) + m) - lv(i, tgt);
  }
  const auto n = lv.rows();
  Mat<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(n);
  std::vector<int> tg(targets.begin(), targets.end());
  return g.record(std::move(out), any_grad(g, {logits}),
                  [logits, softmax, tg = std::move(tg), n](Graph<T>& gr, const Mat<T>& go) {
                    Mat<T> d = *softmax;
                    for (Eigen::Index i = 0; i < n; ++i) d(i, tg[static_cast<std::size_t>(i)]) -= T(1);
                    gr.accumulate(logits, d * (go(0, 0) / static_cast<T>(n)));
                  });
}

template <typename T>
Var squared_error(Graph<T>& g, Var pred, const Matrix<T>& target, T divisor) {
  const auto& pv = g.value(pred);
  if (pv.rows() != target.rows() || pv.cols() != target.cols())
    shape_error("squared_error", dims<T>(pv) + " vs " + dims<T>(target));
  auto diff = std::make_shared<Mat<T>>(pv - target);
  Mat<T> out(1, 1);
  out(0, 0) = diff->squaredNorm() / divisor;
  return g.record(std::move(out), any_grad(g, {pred}), [pred, diff, divisor](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(pred, *diff * (T(2) * go(0, 0) / divisor));
  });
}

template <typename T>
Var masked_abs_error(Graph<T>& g, Var pred, const Matrix<T>& target, const Matrix<T>& mask, T divisor) {
  const auto& pv = g.value(pred);
  if (pv.rows() != target.rows() || pv.cols() != target.cols() || mask.rows() != pv.rows() ||
      mask.cols() != pv.cols())
    shape_error("masked_abs_error", dims<T>(pv) + " vs " + dims<T>(target));
  auto sign = std::make_shared<Mat<T>>(pv.rows(), pv.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < pv.size(); ++i) {
    const T d = pv.data()[i] - target.data()[i];
    const T m = mask.data()[i];
    total += m * std::abs(d);
    sign->data()[i] = m * (d > 0 ? T(1) : (d < 0 ? T(-1) : T(0)));
  }
  Mat<T> out(1, 1);
  out(0, 0) = total / divisor;
  return g.record(std::move(out), any_grad(g, {pred}), [pred, sign, divisor](Graph<T>& gr, const Mat<T>& go) {
    gr.accumulate(pred, *sign * (go(0, 0) / divisor));
  });
}

template <typename T>
Var weighted_sum(Graph<T>& g, std::span<const Var> terms, std::span<const T> weights) {
  if (terms.size() != weights.size() || terms.empty()) shape_error("weighted_sum", "term/weight count mismatch");
  Mat<T> out = Mat<T>::Zero(1, 1);
  bool req = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& tv = g.value(terms[i]);
    if (tv.rows() != 1 || tv.cols() != 1) shape_error("weighted_sum", "terms must be scalars");
    out(0, 0) += weights[i] * tv(0, 0);
    req = req || g.requires_grad(terms[i]);
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<T> ws(weights.begin(), weights.end());
  return g.record(std::move(out), req, [ts = std::move(ts), ws = std::move(ws)](Graph<T>& gr, const Mat<T>& go) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (gr.requires_grad(ts[i])) gr.accumulate(ts[i], go * ws[i]);
    }
  });
}

template <typename T>
Var group_linear(Graph<T>& g, Var x, Var w_stack, const std::vector<std::vector<int>>& cayley) {
  const auto& xv = g.value(x);
  const auto& wv = g.value(w_stack);
  const int order = static_cast<int>(cayley.size());
  const auto cin = xv.cols();
  if (order == 0 || xv.rows() % order != 0) shape_error("group_linear", "rows not divisible by |G|");
  if (wv.rows() != order * cin) shape_error("group_linear", "weight stack " + dims<T>(wv) + " for Cin " + std::to_string(cin));
  const auto n = xv.rows() / order;
  const auto cout = wv.cols();

  // perm[h][n*G+s] = n*G + cayley[s][h]
  auto perms = std::make_shared<std::vector<std::vector<int>>>(static_cast<std::size_t>(order));
  for (int h = 0; h < order; ++h) {
    auto& p = (*perms)[static_cast<std::size_t>(h)];
    p.resize(static_cast<std::size_t>(xv.rows()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (int s = 0; s < order; ++s)
        p[static_cast<std::size_t>(i * order + s)] =
            static_cast<int>(i * order + cayley[static_cast<std::size_t>(s)][static_cast<std::size_t>(h)]);
  }

  Mat<T> out = Mat<T>::Zero(xv.rows(), cout);
  Mat<T> xh(xv.rows(), cin);
  for (int h = 0; h < order; ++h) {
    const auto& p = (*perms)[static_cast<std::size_t>(h)];
    for (Eigen::Index r = 0; r < xv.rows(); ++r) xh.row(r) = xv.row(p[static_cast<std::size_t>(r)]);
    out.noalias() += xh * wv.middleRows(h * cin, cin);
  }
  return g.record(std::move(out), any_grad(g, {x, w_stack}),
                  [x, w_stack, perms, order, cin](Graph<T>& gr, const Mat<T>& go) {
                    const auto& xv2 = gr.value(x);
                    const auto& wv2 = gr.value(w_stack);
                    const bool need_x = gr.requires_grad(x);
                    const bool need_w = gr.requires_grad(w_stack);
                    Mat<T> dx = need_x ? Mat<T>::Zero(xv2.rows(), cin) : Mat<T>();
                    Mat<T> dw = need_w ? Mat<T>::Zero(wv2.rows(), wv2.cols()) : Mat<T>();
                    Mat<T> xh2(xv2.rows(), cin);
                    for (int h = 0; h < order; ++h) {
                      const auto& p = (*perms)[static_cast<std::size_t>(h)];
                      if (need_w) {
                        for (Eigen::Index r = 0; r < xv2.rows(); ++r) xh2.row(r) = xv2.row(p[static_cast<std::size_t>(r)]);
                        dw.middleRows(h * cin, cin).noalias() += xh2.transpose() * go;
                      }
                      if (need_x) {
                        const Mat<T> dxh = go * wv2.middleRows(h * cin, cin).transpose();
                        for (Eigen::Index r = 0; r < dxh.rows(); ++r) dx.row(p[static_cast<std::size_t>(r)]) += dxh.row(r);
                      }
                    }
                    if (need_x) gr.accumulate(x, dx);
                    if (need_w) gr.accumulate(w_stack, dw);
                  });
}

template <typename T>
Var group_vector_project(Graph<T>& g, Var x, const std::vector<Eigen::Matrix3d>& rotations) {
  const auto& xv = g.value(x);
  const int order = static_cast<int>(rotations.size());
  if (xv.cols() != 3 || order == 0 || xv.rows() % order != 0)
    shape_error("group_vector_project", "expected (N*|G|) x 3, got " + dims<T>(xv));
  const auto n = xv.rows() / order;
  auto rots = std::make_shared<std::vector<Eigen::Matrix<T, 3, 3>>>();
  for (const auto& r : rotations) rots->push_back(r.cast<T>());
  Mat<T> out = Mat<T>::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int s = 0; s < order; ++s) out.row(i) += xv.row(i * order + s) * (*rots)[static_cast<std::size_t>(s)].transpose();
  out /= static_cast<T>(order);
  return g.record(std::move(out), any_grad(g, {x}), [x, rots, order](Graph<T>& gr, const Mat<T>& go) {
    Mat<T> dx(go.rows() * order, 3);
    for (Eigen::Index i = 0; i < go.rows(); ++i)
      for (int s = 0; s < order; ++s)
        dx.row(i * order + s) = go.row(i) * (*rots)[static_cast<std::size_t>(s)] / static_cast<T>(order);
    gr.accumulate(x, dx);
  });
}

#define ATOMFLOW_INSTANTIATE_OPS(T)                                                                          \
  template Var add<T>(Graph<T>&, Var, Var);                                                                  \
  template Var sub<T>(Graph<T>&, Var, Var);                                                                  \
  template Var mul<T>(Graph<T>&, Var, Var);                                                                  \
  template Var scale<T>(Graph<T>&, Var, T);                                                                  \
  template Var add_row<T>(Graph<T>&, Var, Var);                                                              \
  template Var matmul<T>(Graph<T>&, Var, Var);                                                               \
  template Var linear<T>(Graph<T>&, Var, Var, Var);                                                          \
  template Var silu<T>(Graph<T>&, Var);                                                                      \
  template Var layer_norm<T>(Graph<T>&, Var, Var, Var, T);                                                   \
  template Var mean_rows<T>(Graph<T>&, Var);                                                                 \
  template Var broadcast_rows<T>(Graph<T>&, Var, Eigen::Index);                                              \
  template Var gather_rows<T>(Graph<T>&, Var, std::vector<int>);                                             \
  template Var repeat_rows<T>(Graph<T>&, Var, int);                                                          \
  template Var block_mean_rows<T>(Graph<T>&, Var, int);                                                      \
  template Var attention<T>(Graph<T>&, Var, Var, Var, Var, int, int);                                        \
  template Var cross_entropy<T>(Graph<T>&, Var, std::span<const int>);                                       \
  template Var squared_error<T>(Graph<T>&, Var, const Matrix<T>&, T);                                        \
  template Var masked_abs_error<T>(Graph<T>&, Var, const Matrix<T>&, const Matrix<T>&, T);                   \
  template Var weighted_sum<T>(Graph<T>&, std::span<const Var>, std::span<const T>);                         \
  template Var group_linear<T>(Graph<T>&, Var, Var, const std::vector<std::vector<int>>&);                   \
  template Var group_vector_project<T>(Graph<T>&, Var, const std::vector<Eigen::Matrix3d>&);

ATOMFLOW_INSTANTIATE_OPS(float)
ATOMFLOW_INSTANTIATE_OPS(double)

#undef ATOMFLOW_INSTANTIATE_OPS

}  // namespace atomflow::nn
