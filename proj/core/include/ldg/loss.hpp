#pragma once

// Training loss (pixel cross-entropy + Lovasz-Softmax) and the five
// evaluation metrics with their zero-denominator conventions.

#include <numeric>

#include "ldg/tensor.hpp"

namespace ldg {

namespace detail {

// out[i] = x[idx[i]] on a flat tensor; backward scatter-adds.
template <class S>
Tensor<S> take(const Tensor<S>& x, std::vector<std::int64_t> idx) {
  std::vector<S> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = x.data()[idx[i]];
  auto xn = x.node();
  auto ids = std::make_shared<std::vector<std::int64_t>>(std::move(idx));
  return make_result<S>({static_cast<std::int64_t>(ids->size())}, std::move(out), {x},
                        [xn, ids](TensorNode<S>& n) {
                          if (!xn->requires_grad) return;
                          xn->ensure_grad();
                          for (std::size_t i = 0; i < ids->size(); ++i)
                            xn->grad[static_cast<std::size_t>((*ids)[i])] += n.grad[i];
                        });
}

template <class S>
void check_binary_target(const Tensor<S>& target) {
  for (S v : target.vec())
    if (v != S(0) && v != S(1))
      throw ContractError("target values must be 0 or 1");
}

}  // namespace detail

// mean over pixels of -log softmax(logits)[target]; logits [N,2,H,W],
// target [N,H,W] with values in {0,1}
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const Tensor<S>& target) {
  if (logits.shape().size() != 4 || logits.shape()[1] != 2)
    throw ShapeError("cross_entropy: logits must be [N,2,H,W], got " +
                     shape_str(logits.shape()));
  Shape want{logits.shape()[0], logits.shape()[2], logits.shape()[3]};
  if (target.shape() != want)
    throw ShapeError("cross_entropy: target shape " + shape_str(target.shape()) +
                     " does not match logits " + shape_str(logits.shape()));
  detail::check_binary_target(target);

  // one-hot constant [N,2,H,W]
  std::int64_t N = want[0], H = want[1], W = want[2];
  std::vector<S> oh(static_cast<std::size_t>(N * 2 * H * W), S(0));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < H * W; ++i) {
      auto cls = static_cast<std::int64_t>(target.data()[n * H * W + i]);
      oh[static_cast<std::size_t>((n * 2 + cls) * H * W + i)] = S(1);
    }
  Tensor<S> onehot = Tensor<S>::from_data({N, 2, H, W}, std::move(oh));

  Tensor<S> m = max(logits, {1}, true);
  Tensor<S> lse = add(log(sum(exp(sub(logits, m)), {1}, true)), m);  // [N,1,H,W]
  Tensor<S> zt = sum(mul(logits, onehot), {1}, true);
  return mean(sub(lse, zt));
}

// Lovasz-Softmax over flattened batch pixels, averaged over classes present
// in the target. On hard predictions this equals the mean of 1 - IoU per
// present class.
template <class S>
Tensor<S> lovasz_softmax(const Tensor<S>& logits, const Tensor<S>& target) {
  if (logits.shape().size() != 4 || logits.shape()[1] != 2)
    throw ShapeError("lovasz_softmax: logits must be [N,2,H,W], got " +
                     shape_str(logits.shape()));
  detail::check_binary_target(target);
  std::int64_t N = logits.shape()[0], H = logits.shape()[2], W = logits.shape()[3];
  std::int64_t P = N * H * W;

  // two-class softmax: p(class1) = sigmoid(z1 - z0)
  Tensor<S> z0 = reshape(slice(logits, 1, 0, 1), {P});
  Tensor<S> z1 = reshape(slice(logits, 1, 1, 1), {P});

  Tensor<S> total;
  int classes_present = 0;
  for (int c = 0; c < 2; ++c) {
    bool present = false;
    for (S v : target.vec())
      if (static_cast<int>(v) == c) {
        present = true;
        break;
      }
    if (!present) continue;
    ++classes_present;

    Tensor<S> p = c == 1 ? sigmoid(sub(z1, z0)) : sigmoid(sub(z0, z1));
    // m_i = 1 - p_i on foreground, p_i on background
    std::vector<S> fg(static_cast<std::size_t>(P));
    for (std::int64_t i = 0; i < P; ++i)
      fg[static_cast<std::size_t>(i)] =
          static_cast<int>(target.data()[i]) == c ? S(1) : S(0);
    Tensor<S> fgt = Tensor<S>::from_data({P}, fg);
    Tensor<S> m = add(mul(fgt, rsub_scalar(S(1), p)), mul(rsub_scalar(S(1), fgt), p));

    // descending stable sort of the (detached) errors, ties by pixel index
    std::vector<std::int64_t> order(static_cast<std::size_t>(P));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      return m.data()[a] > m.data()[b];
    });

    // Jaccard-gradient weights of the sorted ground-truth indicator
    // (constants wrt the tape)
    double total_fg = 0;
    for (S v : fg) total_fg += static_cast<double>(v);
    std::vector<S> w(static_cast<std::size_t>(P));
    double inter = total_fg, uni = total_fg, prev = 0.0;
    for (std::int64_t k = 0; k < P; ++k) {
      double g = static_cast<double>(fg[static_cast<std::size_t>(order[k])]);
      inter -= g;
      uni += 1.0 - g;
      double jac = uni > 0 ? 1.0 - inter / uni : 0.0;
      w[static_cast<std::size_t>(k)] = static_cast<S>(jac - prev);
      prev = jac;
    }
    Tensor<S> loss_c =
        sum(mul(detail::take(m, order), Tensor<S>::from_data({P}, std::move(w))));
    total = total.defined() ? add(total, loss_c) : loss_c;
  }
  if (classes_present == 0) return Tensor<S>::scalar(S(0));
  return mul_scalar(total, S(1) / static_cast<S>(classes_present));
}

template <class S>
Tensor<S> total_loss(const Tensor<S>& logits, const Tensor<S>& target) {
  return add(cross_entropy(logits, target), lovasz_softmax(logits, target));
}

// ----- metrics -----

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Metrics {
  double rec = 0, pre = 0, oa = 0, f1 = 0, iou = 0;
};

inline Metrics metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
    throw ContractError("metrics: negative confusion counts");
  Metrics m;
  auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp),
       fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  m.rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.pre = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  double total = tp + fp + fn + tn;
  m.oa = total > 0 ? (tp + tn) / total : 0.0;
  // all-negative image predicted all-negative: perfect by convention
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) {
    m.f1 = 1.0;
    m.iou = 1.0;
  } else {
    m.f1 = m.pre + m.rec > 0 ? 2.0 * m.pre * m.rec / (m.pre + m.rec) : 0.0;
    m.iou = tp / (tp + fp + fn);
  }
  return m;
}

// accumulate pixel counts for class-1 (change) from argmax predictions
template <class S>
void accumulate_confusion(ConfusionCounts& c, const Tensor<S>& logits,
                          const Tensor<S>& target) {
  std::int64_t N = logits.shape()[0], H = logits.shape()[2], W = logits.shape()[3];
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < H * W; ++i) {
      bool pred = logits.data()[(n * 2 + 1) * H * W + i] > logits.data()[n * 2 * H * W + i];
      bool truth = target.data()[n * H * W + i] != S(0);
      if (pred && truth) ++c.tp;
      else if (pred && !truth) ++c.fp;
      else if (!pred && truth) ++c.fn;
      else ++c.tn;
    }
}

}  // namespace ldg
