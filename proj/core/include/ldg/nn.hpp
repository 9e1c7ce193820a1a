#pragma once

// Neural layers on top of the tensor core: convolution (grouped/dilated),
// pooling, activations, batch/layer norm, linear, bilinear upsampling.

#include <optional>
#include <string>

#include "ldg/tensor.hpp"

namespace ldg {

template <class S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
  bool is_param = true;  // false for buffers (running stats)
};

template <class S>
using ParamList = std::vector<NamedTensor<S>>;

template <class S>
inline std::int64_t param_count(const ParamList<S>& ps) {
  std::int64_t n = 0;
  for (const auto& p : ps)
    if (p.is_param) n += p.tensor.numel();
  return n;
}

// Kaiming-uniform fan-in init, seeded per parameter name.
template <class S>
Tensor<S> kaiming_uniform(Shape shape, std::int64_t fan_in, const std::string& name,
                          std::uint64_t seed) {
  Rng rng(param_seed(seed, name));
  S bound = static_cast<S>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  std::vector<S> d(static_cast<std::size_t>(numel_of(shape)));
  for (auto& v : d) v = static_cast<S>(rng.uniform(-bound, bound));
  return Tensor<S>::from_data(std::move(shape), std::move(d), true);
}

// ----- conv2d -----

struct Conv2dSpec {
  std::int64_t in_ch = 0, out_ch = 0;
  std::int64_t kh = 3, kw = 3;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t dilation = 1;
  std::int64_t groups = 1;
  bool bias = true;

  void validate() const {
    if (in_ch % groups != 0 || out_ch % groups != 0)
      throw ContractError("conv2d: channels (" + std::to_string(in_ch) + "," +
                          std::to_string(out_ch) + ") not divisible by groups " +
                          std::to_string(groups));
  }
  std::int64_t out_dim(std::int64_t in, std::int64_t k) const {
    return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  }
  // MACs * 2 per output position
  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t ho = out_dim(H, kh), wo = out_dim(W, kw);
    return 2 * out_ch * (in_ch / groups) * kh * kw * ho * wo;
  }
};

namespace detail {

template <class S>
void im2col(const S* x, std::int64_t C, std::int64_t H, std::int64_t W,
            const Conv2dSpec& sp, std::int64_t Ho, std::int64_t Wo, S* col) {
  // col: [C*kh*kw, Ho*Wo]
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < sp.kh; ++ky) {
      for (std::int64_t kx = 0; kx < sp.kw; ++kx) {
        S* row = col + ((c * sp.kh + ky) * sp.kw + kx) * Ho * Wo;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          std::int64_t iy = oy * sp.stride - sp.padding + ky * sp.dilation;
          if (iy < 0 || iy >= H) {
            std::fill(row + oy * Wo, row + (oy + 1) * Wo, S(0));
            continue;
          }
          const S* xr = x + (c * H + iy) * W;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            std::int64_t ix = ox * sp.stride - sp.padding + kx * sp.dilation;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? xr[ix] : S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_acc(const S* col, std::int64_t C, std::int64_t H, std::int64_t W,
                const Conv2dSpec& sp, std::int64_t Ho, std::int64_t Wo, S* x) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < sp.kh; ++ky) {
      for (std::int64_t kx = 0; kx < sp.kw; ++kx) {
        const S* row = col + ((c * sp.kh + ky) * sp.kw + kx) * Ho * Wo;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          std::int64_t iy = oy * sp.stride - sp.padding + ky * sp.dilation;
          if (iy < 0 || iy >= H) continue;
          S* xr = x + (c * H + iy) * W;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            std::int64_t ix = ox * sp.stride - sp.padding + kx * sp.dilation;
            if (ix >= 0 && ix < W) xr[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight,
                 const std::optional<Tensor<S>>& bias, const Conv2dSpec& sp) {
  sp.validate();
  if (x.shape().size() != 4)
    throw ShapeError("conv2d input must be 4-d, got " + shape_str(x.shape()));
  std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (C != sp.in_ch)
    throw ShapeError("conv2d: input channels " + std::to_string(C) + " != spec in_ch " +
                     std::to_string(sp.in_ch));
  Shape wsh = {sp.out_ch, sp.in_ch / sp.groups, sp.kh, sp.kw};
  if (weight.shape() != wsh)
    throw ShapeError("conv2d: weight shape " + shape_str(weight.shape()) +
                     " != expected " + shape_str(wsh));
  std::int64_t Ho = sp.out_dim(H, sp.kh), Wo = sp.out_dim(W, sp.kw);
  if (Ho < 1 || Wo < 1)
    throw ShapeError("conv2d: non-positive output size " + std::to_string(Ho) + "x" +
                     std::to_string(Wo) + " from input " + std::to_string(H) + "x" +
                     std::to_string(W) + " kernel " + std::to_string(sp.kh) + "x" +
                     std::to_string(sp.kw) + " stride " + std::to_string(sp.stride) +
                     " pad " + std::to_string(sp.padding) + " dilation " +
                     std::to_string(sp.dilation));

  std::int64_t Cg = sp.in_ch / sp.groups;    // input channels per group
  std::int64_t Og = sp.out_ch / sp.groups;   // output channels per group
  std::int64_t K = Cg * sp.kh * sp.kw;
  std::int64_t L = Ho * Wo;

  std::vector<S> out(static_cast<std::size_t>(N * sp.out_ch * L));
  // batch items write disjoint output slabs, so this splits across workers
  parallel_for(N, [&](std::int64_t n) {
    std::vector<S> col(static_cast<std::size_t>(sp.in_ch * sp.kh * sp.kw * L));
    detail::im2col(x.data() + n * C * H * W, C, H, W, sp, Ho, Wo, col.data());
    for (std::int64_t g = 0; g < sp.groups; ++g) {
      Eigen::Map<const EigenMat<S>> Wm(weight.data() + g * Og * K, Og, K);
      Eigen::Map<const EigenMat<S>> Cm(col.data() + g * Cg * sp.kh * sp.kw * L, K, L);
      Eigen::Map<EigenMat<S>> Om(out.data() + (n * sp.out_ch + g * Og) * L, Og, L);
      Om.noalias() = Wm * Cm;
    }
  });
  if (bias) {
    if (bias->shape() != Shape{sp.out_ch})
      throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()));
    const S* b = bias->data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < sp.out_ch; ++c) {
        S* o = out.data() + (n * sp.out_ch + c) * L;
        for (std::int64_t i = 0; i < L; ++i) o[i] += b[c];
      }
  }

  std::vector<Tensor<S>> parents = {x, weight};
  if (bias) parents.push_back(*bias);
  auto xn = x.node();
  auto wn = weight.node();
  std::shared_ptr<TensorNode<S>> bn = bias ? bias->node() : nullptr;
  return detail::make_result<S>(
      {N, sp.out_ch, Ho, Wo}, std::move(out), parents,
      [xn, wn, bn, sp, N, C, H, W, Ho, Wo, Cg, Og, K, L](TensorNode<S>& node) {
        const S* g = node.grad.data();
        if (bn && bn->requires_grad) {
          bn->ensure_grad();
          S* gb = bn->grad.data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < sp.out_ch; ++c) {
              const S* gr = g + (n * sp.out_ch + c) * L;
              S acc = 0;
              for (std::int64_t i = 0; i < L; ++i) acc += gr[i];
              gb[c] += acc;
            }
        }
        bool need_x = xn->requires_grad;
        bool need_w = wn->requires_grad;
        if (!need_x && !need_w) return;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        std::vector<S> col(static_cast<std::size_t>(sp.in_ch * sp.kh * sp.kw * L));
        std::vector<S> colg(need_x ? col.size() : 0);
        for (std::int64_t n = 0; n < N; ++n) {
          if (need_w)
            detail::im2col(xn->data.data() + n * C * H * W, C, H, W, sp, Ho, Wo,
                           col.data());
          for (std::int64_t gi = 0; gi < sp.groups; ++gi) {
            Eigen::Map<const EigenMat<S>> Gm(g + (n * sp.out_ch + gi * Og) * L, Og, L);
            if (need_w) {
              Eigen::Map<const EigenMat<S>> Cm(col.data() + gi * Cg * sp.kh * sp.kw * L,
                                               K, L);
              Eigen::Map<EigenMat<S>> GW(wn->grad.data() + gi * Og * K, Og, K);
              GW.noalias() += Gm * Cm.transpose();
            }
            if (need_x) {
              Eigen::Map<const EigenMat<S>> Wm(wn->data.data() + gi * Og * K, Og, K);
              Eigen::Map<EigenMat<S>> GC(colg.data() + gi * Cg * sp.kh * sp.kw * L, K, L);
              GC.noalias() = Wm.transpose() * Gm;
            }
          }
          if (need_x)
            detail::col2im_acc(colg.data(), C, H, W, sp, Ho, Wo,
                               xn->grad.data() + n * C * H * W);
        }
      });
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Conv2dSpec& sp) {
  return conv2d(x, weight, std::optional<Tensor<S>>{}, sp);
}

// ----- pooling -----

enum class PoolKind { Max, Avg, GlobalAvg, GlobalMax };

template <class S>
Tensor<S> maxpool2d(const Tensor<S>& x, std::int64_t k, std::int64_t stride) {
  std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (k > H || k > W)
    throw ShapeError("maxpool2d: window " + std::to_string(k) + " larger than input " +
                     std::to_string(H) + "x" + std::to_string(W));
  std::int64_t Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  std::vector<S> out(static_cast<std::size_t>(N * C * Ho * Wo));
  std::vector<std::int64_t> arg(out.size());
  const S* p = x.data();
  std::int64_t oi = 0;
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = p + nc * H * W;
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox, ++oi) {
        S best = plane[oy * stride * W + ox * stride];
        std::int64_t bi = nc * H * W + oy * stride * W + ox * stride;
        for (std::int64_t ky = 0; ky < k; ++ky)
          for (std::int64_t kx = 0; kx < k; ++kx) {
            std::int64_t ii = (oy * stride + ky) * W + ox * stride + kx;
            if (plane[ii] > best) {
              best = plane[ii];
              bi = nc * H * W + ii;
            }
          }
        out[static_cast<std::size_t>(oi)] = best;
        arg[static_cast<std::size_t>(oi)] = bi;
      }
  }
  auto xn = x.node();
  return detail::make_result<S>({N, C, Ho, Wo}, std::move(out), {x},
                                [xn, arg](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  S* gx = xn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::size_t i = 0; i < arg.size(); ++i)
                                    gx[arg[i]] += g[i];
                                });
}

template <class S>
Tensor<S> avgpool2d(const Tensor<S>& x, std::int64_t k, std::int64_t stride) {
  std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (k > H || k > W)
    throw ShapeError("avgpool2d: window " + std::to_string(k) + " larger than input " +
                     std::to_string(H) + "x" + std::to_string(W));
  std::int64_t Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  std::vector<S> out(static_cast<std::size_t>(N * C * Ho * Wo));
  const S* p = x.data();
  S inv = S(1) / static_cast<S>(k * k);
  std::int64_t oi = 0;
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = p + nc * H * W;
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox, ++oi) {
        S acc = 0;
        for (std::int64_t ky = 0; ky < k; ++ky)
          for (std::int64_t kx = 0; kx < k; ++kx)
            acc += plane[(oy * stride + ky) * W + ox * stride + kx];
        out[static_cast<std::size_t>(oi)] = acc * inv;
      }
  }
  auto xn = x.node();
  return detail::make_result<S>(
      {N, C, Ho, Wo}, std::move(out), {x},
      [xn, N, C, H, W, Ho, Wo, k, stride, inv](TensorNode<S>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* g = n.grad.data();
        std::int64_t oi = 0;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          S* plane = gx + nc * H * W;
          for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox, ++oi)
              for (std::int64_t ky = 0; ky < k; ++ky)
                for (std::int64_t kx = 0; kx < k; ++kx)
                  plane[(oy * stride + ky) * W + ox * stride + kx] += g[oi] * inv;
        }
      });
}

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  return mean(x, {2, 3}, /*keepdim=*/true);
}
template <class S>
Tensor<S> global_max_pool(const Tensor<S>& x) {
  return max(x, {2, 3}, /*keepdim=*/true);
}
// reductions over the channel axis, [N,1,H,W] outputs (spatial-attention stats)
template <class S>
Tensor<S> channel_mean(const Tensor<S>& x) {
  return mean(x, {1}, /*keepdim=*/true);
}
template <class S>
Tensor<S> channel_max(const Tensor<S>& x) {
  return max(x, {1}, /*keepdim=*/true);
}

// ----- activations -----

enum class ActKind { Sigmoid, Silu, Relu, Hardswish };

template <class S>
Tensor<S> activation(ActKind kind, const Tensor<S>& x) {
  switch (kind) {
    case ActKind::Sigmoid: return sigmoid(x);
    case ActKind::Silu: return silu(x);
    case ActKind::Relu: return relu(x);
    case ActKind::Hardswish: return hardswish(x);
  }
  throw ContractError("unknown activation kind");
}

// ----- bilinear upsampling (align_corners = false, half-pixel centers) -----

template <class S>
Tensor<S> upsample_bilinear(const Tensor<S>& x, std::int64_t scale) {
  if (scale < 1) throw ContractError("upsample_bilinear: scale must be >= 1");
  if (scale == 1) return reshape(x, x.shape());  // identity that still records a node
  std::int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  std::int64_t Ho = H * scale, Wo = W * scale;

  // per-output-coordinate source indices and lerp weights, shared by h/w axes
  auto build = [&](std::int64_t in, std::int64_t out, std::vector<std::int64_t>& i0,
                   std::vector<std::int64_t>& i1, std::vector<S>& w1) {
    i0.resize(out);
    i1.resize(out);
    w1.resize(out);
    for (std::int64_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) / static_cast<double>(scale) - 0.5;
      if (src < 0) src = 0;
      if (src > in - 1) src = static_cast<double>(in - 1);
      std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
      std::int64_t hi = std::min(lo + 1, in - 1);
      i0[o] = lo;
      i1[o] = hi;
      w1[o] = static_cast<S>(src - static_cast<double>(lo));
    }
  };
  std::vector<std::int64_t> y0, y1, x0, x1;
  std::vector<S> wy, wx;
  build(H, Ho, y0, y1, wy);
  build(W, Wo, x0, x1, wx);

  std::vector<S> out(static_cast<std::size_t>(N * C * Ho * Wo));
  const S* p = x.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* plane = p + nc * H * W;
    S* oplane = out.data() + nc * Ho * Wo;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      const S* r0 = plane + y0[oy] * W;
      const S* r1 = plane + y1[oy] * W;
      S fy = wy[oy];
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        S fx = wx[ox];
        S top = r0[x0[ox]] * (S(1) - fx) + r0[x1[ox]] * fx;
        S bot = r1[x0[ox]] * (S(1) - fx) + r1[x1[ox]] * fx;
        oplane[oy * Wo + ox] = top * (S(1) - fy) + bot * fy;
      }
    }
  }
  auto xn = x.node();
  return detail::make_result<S>(
      {N, C, Ho, Wo}, std::move(out), {x},
      [xn, N, C, H, W, Ho, Wo, y0, y1, x0, x1, wy, wx](TensorNode<S>& n) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* g = n.grad.data();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          S* plane = gx + nc * H * W;
          const S* gplane = g + nc * Ho * Wo;
          for (std::int64_t oy = 0; oy < Ho; ++oy) {
            S fy = wy[oy];
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
              S fx = wx[ox];
              S gv = gplane[oy * Wo + ox];
              plane[y0[oy] * W + x0[ox]] += gv * (S(1) - fy) * (S(1) - fx);
              plane[y0[oy] * W + x1[ox]] += gv * (S(1) - fy) * fx;
              plane[y1[oy] * W + x0[ox]] += gv * fy * (S(1) - fx);
              plane[y1[oy] * W + x1[ox]] += gv * fy * fx;
            }
          }
        }
      });
}

// ----- layer modules -----

template <class S>
struct Conv2d {
  Conv2dSpec spec;
  Tensor<S> weight;
  Tensor<S> bias;

  Conv2d() = default;
  Conv2d(Conv2dSpec sp, const std::string& name, std::uint64_t seed) : spec(sp) {
    spec.validate();
    std::int64_t fan_in = (spec.in_ch / spec.groups) * spec.kh * spec.kw;
    weight = kaiming_uniform<S>({spec.out_ch, spec.in_ch / spec.groups, spec.kh, spec.kw},
                                fan_in, name + ".weight", seed);
    if (spec.bias) bias = Tensor<S>::zeros({spec.out_ch}, true);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    std::optional<Tensor<S>> b;
    if (spec.bias) b = bias;
    return conv2d(x, weight, b, spec);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.push_back({prefix + ".weight", weight, true});
    if (spec.bias) out.push_back({prefix + ".bias", bias, true});
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const { return spec.flops(H, W); }
};

template <class S>
struct BatchNorm2d {
  std::int64_t channels = 0;
  S eps = static_cast<S>(1e-5);
  S momentum = static_cast<S>(0.1);
  bool training = true;
  Tensor<S> gamma, beta;          // learnable
  Tensor<S> running_mean, running_var;  // buffers

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::int64_t c) : channels(c) {
    gamma = Tensor<S>::ones({1, c, 1, 1}, true);
    beta = Tensor<S>::zeros({1, c, 1, 1}, true);
    running_mean = Tensor<S>::zeros({1, c, 1, 1});
    running_var = Tensor<S>::ones({1, c, 1, 1});
  }

  Tensor<S> forward(const Tensor<S>& x) {
    if (x.shape()[1] != channels)
      throw ShapeError("batchnorm: channel count " + std::to_string(x.shape()[1]) +
                       " != " + std::to_string(channels));
    if (training) {
      std::int64_t n = x.shape()[0] * x.shape()[2] * x.shape()[3];
      if (n < 2) throw ContractError("batchnorm: train mode needs N*H*W >= 2");
      Tensor<S> mu = mean(x, {0, 2, 3}, true);
      Tensor<S> xc = sub(x, mu);
      Tensor<S> var = mean(square(xc), {0, 2, 3}, true);
      Tensor<S> y = add(mul(div(xc, sqrt(add_scalar(var, eps))), gamma), beta);
      {
        NoGradGuard ng;
        S unbias = static_cast<S>(n) / static_cast<S>(n - 1);
        S* rm = running_mean.data();
        S* rv = running_var.data();
        const S* m = mu.data();
        const S* v = var.data();
        for (std::int64_t c = 0; c < channels; ++c) {
          rm[c] = (S(1) - momentum) * rm[c] + momentum * m[c];
          rv[c] = (S(1) - momentum) * rv[c] + momentum * v[c] * unbias;
        }
      }
      return y;
    }
    // eval: pure affine map of the input
    Tensor<S> xc = sub(x, running_mean);
    return add(mul(div(xc, sqrt(add_scalar(running_var, eps))), gamma), beta);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
    out.push_back({prefix + ".running_mean", running_mean, false});
    out.push_back({prefix + ".running_var", running_var, false});
  }
};

// Per-position channel normalization (layer norm over C at each (n,h,w)).
template <class S>
struct LayerNormChannel {
  std::int64_t channels = 0;
  S eps = static_cast<S>(1e-5);
  Tensor<S> gamma, beta;

  LayerNormChannel() = default;
  explicit LayerNormChannel(std::int64_t c) : channels(c) {
    gamma = Tensor<S>::ones({1, c, 1, 1}, true);
    beta = Tensor<S>::zeros({1, c, 1, 1}, true);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> mu = mean(x, {1}, true);
    Tensor<S> xc = sub(x, mu);
    Tensor<S> var = mean(square(xc), {1}, true);
    return add(mul(div(xc, sqrt(add_scalar(var, eps))), gamma), beta);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
  }
};

template <class S>
struct Linear {
  std::int64_t in = 0, out = 0;
  bool has_bias = true;
  Tensor<S> weight;  // stored [in, out]
  Tensor<S> bias;

  Linear() = default;
  Linear(std::int64_t in_, std::int64_t out_, const std::string& name, std::uint64_t seed,
         bool bias_ = true)
      : in(in_), out(out_), has_bias(bias_) {
    weight = kaiming_uniform<S>({in, out}, in, name + ".weight", seed);
    if (has_bias) bias = Tensor<S>::zeros({out}, true);
  }

  // x: [B, in] -> [B, out]
  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = matmul(x, weight);
    if (has_bias) y = add(y, reshape(bias, {1, out}));
    return y;
  }

  void collect(const std::string& prefix, ParamList<S>& out_list) const {
    out_list.push_back({prefix + ".weight", weight, true});
    if (has_bias) out_list.push_back({prefix + ".bias", bias, true});
  }

  std::int64_t flops(std::int64_t positions) const { return 2 * in * out * positions; }
};

}  // namespace ldg
