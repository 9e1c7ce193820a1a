#pragma once

// Dense N-d tensors with reverse-mode autodiff on a dynamic tape.
// Row-major contiguous storage, NCHW layout for images. Broadcasting is
// right-aligned size-1 expansion only.

#include <Eigen/Core>
#include <algorithm>
#include <cassert>
#include <limits>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>

#include "ldg/common.hpp"

namespace ldg {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  TensorNode(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    MemTracker::add(static_cast<std::int64_t>(data.size() * sizeof(S)));
  }
  ~TensorNode() {
    MemTracker::sub(static_cast<std::int64_t>((data.size() + grad.size()) * sizeof(S)));
  }
  TensorNode(const TensorNode&) = delete;
  TensorNode& operator=(const TensorNode&) = delete;

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.empty()) {
      grad.assign(data.size(), S(0));
      MemTracker::add(static_cast<std::int64_t>(grad.size() * sizeof(S)));
    }
  }
};

template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<S>> n) : node_(std::move(n)) {}

  static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
    if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<S>>(std::move(shape), std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<S> d(static_cast<std::size_t>(numel_of(shape)), S(0));
    return from_data(std::move(shape), std::move(d), requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), S(1), requires_grad);
  }
  static Tensor full(Shape shape, S v, bool requires_grad = false) {
    std::vector<S> d(static_cast<std::size_t>(numel_of(shape)), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }
  static Tensor scalar(S v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  S* data() { return node_->data.data(); }
  const S* data() const { return node_->data.data(); }
  std::vector<S>& vec() { return node_->data; }
  const std::vector<S>& vec() const { return node_->data; }
  S item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  S* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<S>& grad_vec() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }

  // Value copy that does not participate in the graph.
  Tensor detach() const {
    return from_data(node_->shape, node_->data, false);
  }

  std::shared_ptr<TensorNode<S>> node() const { return node_; }

  void backward() const {
    if (numel() != 1)
      throw ContractError("backward() requires a scalar root, got " + shape_str(shape()));
    if (!node_->requires_grad) {
      std::fprintf(stderr, "ldg: backward() on detached root is a no-op\n");
      return;
    }
    // Post-order DFS gives a topological order; reverse-iterate it.
    std::vector<TensorNode<S>*> order;
    std::unordered_set<TensorNode<S>*> seen;
    std::vector<std::pair<TensorNode<S>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        TensorNode<S>* p = n->parents[i++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

namespace detail {

template <class S>
Tensor<S> make_result(Shape shape, std::vector<S> data,
                      std::vector<Tensor<S>> parents,
                      std::function<void(TensorNode<S>&)> bw) {
  auto n = std::make_shared<TensorNode<S>>(std::move(shape), std::move(data));
  bool rg = false;
  if (grad_mode()) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  n->requires_grad = rg;
  if (rg) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(bw);
  }
  return Tensor<S>(std::move(n));
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    std::int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    std::int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("operands not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` right-aligned into an nd-dim frame, 0 on broadcast axes.
inline std::vector<std::int64_t> bcast_strides(const Shape& s, std::size_t nd) {
  std::vector<std::int64_t> st(nd, 0);
  std::int64_t acc = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t k = s.size() - 1 - i;
    st[nd - 1 - i] = (s[k] == 1) ? 0 : acc;
    acc *= s[k];
  }
  return st;
}

// Row-major walk over `out_shape`, calling f(out_flat, a_flat, b_flat).
// Adjacent dims with jointly row-major-compatible strides are merged so the
// innermost traversal is a tight strided loop; visit order is unchanged.
template <class F>
void bcast_walk(const Shape& out_shape, const std::vector<std::int64_t>& sa_in,
                const std::vector<std::int64_t>& sb_in, F&& f) {
  std::size_t nd = out_shape.size();
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  Shape sh = out_shape;
  std::vector<std::int64_t> sa = sa_in, sb = sb_in;
  std::size_t w = 0;
  for (std::size_t d = 1; d < nd; ++d) {
    if (sa[w] == sa[d] * sh[d] && sb[w] == sb[d] * sh[d]) {
      sh[w] *= sh[d];
      sa[w] = sa[d];
      sb[w] = sb[d];
    } else {
      ++w;
      sh[w] = sh[d];
      sa[w] = sa[d];
      sb[w] = sb[d];
    }
  }
  nd = w + 1;
  std::int64_t inner = sh[nd - 1], ja = sa[nd - 1], jb = sb[nd - 1];
  std::int64_t outer = 1;
  for (std::size_t d = 0; d + 1 < nd; ++d) outer *= sh[d];
  std::vector<std::int64_t> idx(nd, 0);
  std::int64_t ia0 = 0, ib0 = 0, o = 0;
  for (std::int64_t t = 0; t < outer; ++t) {
    std::int64_t ia = ia0, ib = ib0;
    for (std::int64_t i = 0; i < inner; ++i) {
      f(o++, ia, ib);
      ia += ja;
      ib += jb;
    }
    for (std::size_t d = nd - 1; d-- > 0;) {
      idx[d]++;
      ia0 += sa[d];
      ib0 += sb[d];
      if (idx[d] < sh[d]) break;
      ia0 -= sa[d] * sh[d];
      ib0 -= sb[d] * sh[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// ----- binary elementwise with broadcasting -----

template <class S, class F, class DA, class DB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, F f, DA dfa, DB dfb) {
  const Shape& ash = a.shape();
  const Shape& bsh = b.shape();
  if (ash == bsh) {
    std::vector<S> out(a.vec().size());
    const S* pa = a.data();
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
    auto an = a.node();
    auto bn = b.node();
    return detail::make_result<S>(
        ash, std::move(out), {a, b}, [an, bn, dfa, dfb](TensorNode<S>& n) {
          const S* pa = an->data.data();
          const S* pb = bn->data.data();
          const S* g = n.grad.data();
          if (an->requires_grad) {
            an->ensure_grad();
            S* ga = an->grad.data();
            for (std::size_t i = 0; i < n.data.size(); ++i) ga[i] += dfa(pa[i], pb[i]) * g[i];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            S* gb = bn->grad.data();
            for (std::size_t i = 0; i < n.data.size(); ++i) gb[i] += dfb(pa[i], pb[i]) * g[i];
          }
        });
  }
  Shape osh = detail::broadcast_shape(ash, bsh);
  auto sa = detail::bcast_strides(ash, osh.size());
  auto sb = detail::bcast_strides(bsh, osh.size());
  std::vector<S> out(static_cast<std::size_t>(numel_of(osh)));
  const S* pa = a.data();
  const S* pb = b.data();
  detail::bcast_walk(osh, sa, sb,
                     [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                       out[static_cast<std::size_t>(o)] = f(pa[ia], pb[ib]);
                     });
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      osh, std::move(out), {a, b},
      [an, bn, osh, sa, sb, dfa, dfb](TensorNode<S>& n) {
        const S* pa = an->data.data();
        const S* pb = bn->data.data();
        const S* g = n.grad.data();
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        S* ga = an->requires_grad ? an->grad.data() : nullptr;
        S* gb = bn->requires_grad ? bn->grad.data() : nullptr;
        detail::bcast_walk(osh, sa, sb,
                           [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                             if (ga) ga[ia] += dfa(pa[ia], pb[ib]) * g[o];
                             if (gb) gb[ib] += dfb(pa[ia], pb[ib]) * g[o];
                           });
      });
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}
template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}
template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <class S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }

// ----- unary elementwise -----

template <class S, class F, class DF>
Tensor<S> unary_op(const Tensor<S>& x, F f, DF df) {
  std::vector<S> out(x.vec().size());
  const S* px = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(px[i]);
  auto xn = x.node();
  return detail::make_result<S>(x.shape(), std::move(out), {x},
                                [xn, df](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  const S* px = xn->data.data();
                                  const S* py = n.data.data();
                                  const S* g = n.grad.data();
                                  S* gx = xn->grad.data();
                                  for (std::size_t i = 0; i < n.data.size(); ++i)
                                    gx[i] += df(px[i], py[i]) * g[i];
                                });
}

template <class S>
Tensor<S> neg(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return -v; }, [](S, S) { return S(-1); });
}
template <class S>
Tensor<S> operator-(const Tensor<S>& x) { return neg(x); }

// |x| with subgradient 0 at 0.
template <class S>
Tensor<S> abs(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return std::abs(v); },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <class S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}
template <class S>
Tensor<S> log(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}
template <class S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return std::sqrt(v); },
                  [](S, S y) { return S(0.5) / y; });
}
template <class S>
Tensor<S> square(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

namespace detail {
template <class S>
inline S sigmoid_val(S v) {
  if (v >= S(0)) {
    S e = std::exp(-v);
    return S(1) / (S(1) + e);
  }
  S e = std::exp(v);
  return e / (S(1) + e);
}
}  // namespace detail

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return detail::sigmoid_val(v); },
                  [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return v * detail::sigmoid_val(v); },
      [](S v, S) {
        S s = detail::sigmoid_val(v);
        return s * (S(1) + v * (S(1) - s));
      });
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary_op(x, [](S v) { return v > S(0) ? v : S(0); },
                  [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

// x * relu6(x + 3) / 6
template <class S>
Tensor<S> hardswish(const Tensor<S>& x) {
  return unary_op(
      x,
      [](S v) {
        S r = v + S(3);
        r = r < S(0) ? S(0) : (r > S(6) ? S(6) : r);
        return v * r / S(6);
      },
      [](S v, S) {
        if (v <= S(-3)) return S(0);
        if (v >= S(3)) return S(1);
        return (S(2) * v + S(3)) / S(6);
      });
}

template <class S>
Tensor<S> softplus(const Tensor<S>& x) {
  return unary_op(
      x,
      [](S v) {
        if (v > S(30)) return v;
        if (v < S(-30)) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](S v, S) { return detail::sigmoid_val(v); });
}

// ----- scalar convenience -----

template <class S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return unary_op(x, [c](S v) { return v + c; }, [](S, S) { return S(1); });
}
template <class S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  return unary_op(x, [c](S v) { return v * c; }, [c](S, S) { return c; });
}
template <class S>
Tensor<S> rsub_scalar(S c, const Tensor<S>& x) {  // c - x
  return unary_op(x, [c](S v) { return c - v; }, [](S, S) { return S(-1); });
}

// ----- matmul (2-d) -----

template <class S>
using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeError("matmul expects 2-d operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  std::int64_t M = a.shape()[0], K = a.shape()[1];
  std::int64_t K2 = b.shape()[0], N = b.shape()[1];
  if (K != K2)
    throw ShapeError("matmul inner-dim mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<S> out(static_cast<std::size_t>(M * N));
  {
    Eigen::Map<const EigenMat<S>> A(a.data(), M, K), B(b.data(), K, N);
    Eigen::Map<EigenMat<S>> C(out.data(), M, N);
    C.noalias() = A * B;
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      {M, N}, std::move(out), {a, b}, [an, bn, M, K, N](TensorNode<S>& n) {
        Eigen::Map<const EigenMat<S>> G(n.grad.data(), M, N);
        if (an->requires_grad) {
          an->ensure_grad();
          Eigen::Map<const EigenMat<S>> B(bn->data.data(), K, N);
          Eigen::Map<EigenMat<S>> GA(an->grad.data(), M, K);
          GA.noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          Eigen::Map<const EigenMat<S>> A(an->data.data(), M, K);
          Eigen::Map<EigenMat<S>> GB(bn->grad.data(), K, N);
          GB.noalias() += A.transpose() * G;
        }
      });
}

// ----- reductions -----

enum class ReduceKind { Sum, Mean, Max };

namespace detail {
inline void check_axes(const Shape& shape, const std::vector<int>& axes) {
  for (int ax : axes) {
    if (ax < 0 || ax >= static_cast<int>(shape.size()))
      throw ShapeError("reduce axis " + std::to_string(ax) + " invalid for shape " +
                       shape_str(shape));
  }
}

// Map from input flat index to output flat index when `axes` are reduced.
inline std::vector<std::int64_t> reduce_out_strides(const Shape& in_shape,
                                                    const std::vector<int>& axes,
                                                    Shape& out_shape_keepdim) {
  std::size_t nd = in_shape.size();
  std::vector<bool> red(nd, false);
  for (int ax : axes) red[static_cast<std::size_t>(ax)] = true;
  out_shape_keepdim = in_shape;
  for (std::size_t d = 0; d < nd; ++d)
    if (red[d]) out_shape_keepdim[d] = 1;
  // strides over out_shape_keepdim; reduced dims (size 1) get stride 0
  std::vector<std::int64_t> ost(nd, 0);
  std::int64_t acc = 1;
  for (std::size_t i = nd; i-- > 0;) {
    ost[i] = (out_shape_keepdim[i] == 1) ? 0 : acc;
    acc *= out_shape_keepdim[i];
  }
  return ost;
}
}  // namespace detail

template <class S>
Tensor<S> reduce(ReduceKind kind, const Tensor<S>& x, std::vector<int> axes,
                 bool keepdim = false) {
  const Shape& ish = x.shape();
  if (axes.empty()) {
    axes.resize(ish.size());
    for (std::size_t i = 0; i < ish.size(); ++i) axes[i] = static_cast<int>(i);
  }
  detail::check_axes(ish, axes);
  Shape osh_keep;
  auto ost = detail::reduce_out_strides(ish, axes, osh_keep);
  std::int64_t onum = numel_of(osh_keep);
  std::int64_t inum = numel_of(ish);
  std::int64_t group = onum > 0 ? inum / onum : 0;

  // in-strides over the full frame
  auto ist = detail::bcast_strides(ish, ish.size());
  std::vector<S> out;
  std::vector<std::int64_t> winner;  // for max
  if (kind == ReduceKind::Max) {
    out.assign(static_cast<std::size_t>(onum), -std::numeric_limits<S>::infinity());
    winner.assign(static_cast<std::size_t>(onum), -1);
  } else {
    out.assign(static_cast<std::size_t>(onum), S(0));
  }
  const S* px = x.data();
  detail::bcast_walk(ish, ist, ost, [&](std::int64_t, std::int64_t ii, std::int64_t oi) {
    S v = px[ii];
    if (kind == ReduceKind::Max) {
      if (winner[static_cast<std::size_t>(oi)] < 0 || v > out[static_cast<std::size_t>(oi)]) {
        out[static_cast<std::size_t>(oi)] = v;
        winner[static_cast<std::size_t>(oi)] = ii;
      }
    } else {
      out[static_cast<std::size_t>(oi)] += v;
    }
  });
  if (kind == ReduceKind::Mean) {
    S inv = S(1) / static_cast<S>(group);
    for (auto& v : out) v *= inv;
  }

  Shape final_shape;
  if (keepdim) {
    final_shape = osh_keep;
  } else {
    std::vector<bool> red(ish.size(), false);
    for (int ax : axes) red[static_cast<std::size_t>(ax)] = true;
    for (std::size_t d = 0; d < ish.size(); ++d)
      if (!red[d]) final_shape.push_back(ish[d]);
    if (final_shape.empty()) final_shape = {1};
  }

  auto xn = x.node();
  return detail::make_result<S>(
      final_shape, std::move(out), {x},
      [xn, kind, ish, ist, ost, group, winner](TensorNode<S>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* g = n.grad.data();
        if (kind == ReduceKind::Max) {
          for (std::size_t oi = 0; oi < winner.size(); ++oi)
            gx[winner[oi]] += g[oi];
        } else {
          S scale = kind == ReduceKind::Mean ? S(1) / static_cast<S>(group) : S(1);
          detail::bcast_walk(ish, ist, ost,
                             [&](std::int64_t, std::int64_t ii, std::int64_t oi) {
                               gx[ii] += g[oi] * scale;
                             });
        }
      });
}

template <class S>
Tensor<S> sum(const Tensor<S>& x, std::vector<int> axes = {}, bool keepdim = false) {
  return reduce(ReduceKind::Sum, x, std::move(axes), keepdim);
}
template <class S>
Tensor<S> mean(const Tensor<S>& x, std::vector<int> axes = {}, bool keepdim = false) {
  return reduce(ReduceKind::Mean, x, std::move(axes), keepdim);
}
template <class S>
Tensor<S> max(const Tensor<S>& x, std::vector<int> axes = {}, bool keepdim = false) {
  return reduce(ReduceKind::Max, x, std::move(axes), keepdim);
}

// ----- shape manipulation -----

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     ": element count mismatch");
  auto xn = x.node();
  return detail::make_result<S>(std::move(shape), x.vec(), {x},
                                [xn](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  S* gx = xn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i)
                                    gx[i] += g[i];
                                });
}

template <class S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  const Shape& ish = x.shape();
  if (perm.size() != ish.size()) throw ShapeError("permute rank mismatch");
  std::size_t nd = ish.size();
  Shape osh(nd);
  for (std::size_t i = 0; i < nd; ++i) osh[i] = ish[static_cast<std::size_t>(perm[i])];
  // in strides
  std::vector<std::int64_t> ist(nd);
  std::int64_t acc = 1;
  for (std::size_t i = nd; i-- > 0;) {
    ist[i] = acc;
    acc *= ish[i];
  }
  std::vector<std::int64_t> pst(nd);
  for (std::size_t i = 0; i < nd; ++i) pst[i] = ist[static_cast<std::size_t>(perm[i])];

  std::int64_t total = x.numel();
  std::vector<std::int64_t> srcmap(static_cast<std::size_t>(total));
  std::vector<std::int64_t> idx(nd, 0);
  std::int64_t src = 0;
  for (std::int64_t o = 0; o < total; ++o) {
    srcmap[static_cast<std::size_t>(o)] = src;
    for (std::size_t d = nd; d-- > 0;) {
      idx[d]++;
      src += pst[d];
      if (idx[d] < osh[d]) break;
      src -= pst[d] * osh[d];
      idx[d] = 0;
    }
  }
  std::vector<S> out(static_cast<std::size_t>(total));
  const S* px = x.data();
  for (std::int64_t o = 0; o < total; ++o) out[static_cast<std::size_t>(o)] = px[srcmap[static_cast<std::size_t>(o)]];
  auto xn = x.node();
  return detail::make_result<S>(osh, std::move(out), {x},
                                [xn, srcmap](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  S* gx = xn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::size_t o = 0; o < srcmap.size(); ++o)
                                    gx[srcmap[o]] += g[o];
                                });
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int axis) {
  if (xs.empty()) throw ContractError("concat of zero tensors");
  const Shape& base = xs[0].shape();
  std::size_t nd = base.size();
  if (axis < 0 || axis >= static_cast<int>(nd)) throw ShapeError("concat axis invalid");
  std::int64_t cat = 0;
  for (const auto& t : xs) {
    if (t.shape().size() != nd) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < nd; ++d)
      if (static_cast<int>(d) != axis && t.shape()[d] != base[d])
        throw ShapeError("concat shape mismatch: " + shape_str(base) + " vs " +
                         shape_str(t.shape()));
    cat += t.shape()[static_cast<std::size_t>(axis)];
  }
  Shape osh = base;
  osh[static_cast<std::size_t>(axis)] = cat;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= base[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < nd; ++d) inner *= base[d];
  std::vector<S> out(static_cast<std::size_t>(numel_of(osh)));
  std::int64_t row = cat * inner;
  std::int64_t off = 0;
  for (const auto& t : xs) {
    std::int64_t tc = t.shape()[static_cast<std::size_t>(axis)] * inner;
    const S* p = t.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(p + o * tc, p + (o + 1) * tc, out.begin() + o * row + off);
    off += tc;
  }
  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  for (const auto& t : xs) nodes.push_back(t.node());
  return detail::make_result<S>(
      osh, std::move(out), xs, [nodes, outer, inner, cat](TensorNode<S>& n) {
        const S* g = n.grad.data();
        std::int64_t row = cat * inner;
        std::int64_t off = 0;
        for (auto& pn : nodes) {
          std::int64_t tc = pn->numel() / outer;  // chunk length along axis * inner
          if (pn->requires_grad) {
            pn->ensure_grad();
            S* gp = pn->grad.data();
            for (std::int64_t o = 0; o < outer; ++o)
              for (std::int64_t i = 0; i < tc; ++i)
                gp[o * tc + i] += g[o * row + off + i];
          }
          off += tc;
        }
      });
}

template <class S>
Tensor<S> slice(const Tensor<S>& x, int axis, std::int64_t start, std::int64_t len) {
  const Shape& ish = x.shape();
  std::size_t nd = ish.size();
  if (axis < 0 || axis >= static_cast<int>(nd)) throw ShapeError("slice axis invalid");
  if (start < 0 || start + len > ish[static_cast<std::size_t>(axis)])
    throw ShapeError("slice range out of bounds for " + shape_str(ish));
  Shape osh = ish;
  osh[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= ish[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < nd; ++d) inner *= ish[d];
  std::int64_t irow = ish[static_cast<std::size_t>(axis)] * inner;
  std::int64_t orow = len * inner;
  std::vector<S> out(static_cast<std::size_t>(outer * orow));
  const S* p = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(p + o * irow + start * inner, p + o * irow + (start + len) * inner,
              out.begin() + o * orow);
  auto xn = x.node();
  return detail::make_result<S>(osh, std::move(out), {x},
                                [xn, outer, irow, orow, start, inner](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  S* gx = xn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::int64_t o = 0; o < outer; ++o)
                                    for (std::int64_t i = 0; i < orow; ++i)
                                      gx[o * irow + start * inner + i] += g[o * orow + i];
                                });
}

template <class S>
bool all_finite(const Tensor<S>& x) {
  for (S v : x.vec())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ldg
