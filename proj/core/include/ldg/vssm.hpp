#pragma once

// Visual state space block: four-directional selective scan (SS2D) with an
// input-dependent linear recurrence, O(L*N*C) per direction.
//
// Discretization: zero-order hold for A (Abar = exp(delta*A)), Euler for B
// (Bbar = delta*B). h_0 = 0.

#include <array>

#include "ldg/nn.hpp"

namespace ldg {

// x, delta: [B,L,C]; Bm, Cm: [B,L,N]; A: [C,N] (strictly negative);
// D: [C] skip gain. Returns y: [B,L,C] with
//   h_t = exp(delta_t * A) .* h_{t-1} + (delta_t * x_t) outer B_t
//   y_t = h_t * C_t + D .* x_t
template <class S>
Tensor<S> selective_scan(const Tensor<S>& x, const Tensor<S>& delta,
                         const Tensor<S>& Bm, const Tensor<S>& Cm,
                         const Tensor<S>& A, const Tensor<S>& D) {
  if (x.shape().size() != 3) throw ShapeError("selective_scan: x must be [B,L,C]");
  std::int64_t B = x.shape()[0], L = x.shape()[1], C = x.shape()[2];
  if (delta.shape() != x.shape())
    throw ShapeError("selective_scan: delta shape " + shape_str(delta.shape()) +
                     " != x shape " + shape_str(x.shape()));
  if (Bm.shape().size() != 3 || Bm.shape()[0] != B || Bm.shape()[1] != L)
    throw ShapeError("selective_scan: B shape " + shape_str(Bm.shape()));
  std::int64_t N = Bm.shape()[2];
  if (Cm.shape() != Bm.shape())
    throw ShapeError("selective_scan: C shape " + shape_str(Cm.shape()));
  if (A.shape() != Shape{C, N}) throw ShapeError("selective_scan: A shape " + shape_str(A.shape()));
  if (D.shape() != Shape{C}) throw ShapeError("selective_scan: D shape " + shape_str(D.shape()));
  for (S v : delta.vec())
    if (!(v > S(0))) throw ContractError("selective_scan: delta must be strictly positive");

  using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Array<S, Eigen::Dynamic, 1>;

  bool need_tape = grad_mode() &&
                   (x.requires_grad() || delta.requires_grad() || Bm.requires_grad() ||
                    Cm.requires_grad() || A.requires_grad() || D.requires_grad());

  Eigen::Map<const Arr> Aa(A.data(), C, N);
  Eigen::Map<const Vec> Dv(D.data(), C);

  std::vector<S> out(static_cast<std::size_t>(B * L * C));
  // cached per-step states h_t (t = 1..L) for the backward pass
  auto hist = std::make_shared<std::vector<S>>();
  if (need_tape) hist->resize(static_cast<std::size_t>(B * L * C * N));

  for (std::int64_t b = 0; b < B; ++b) {
    Arr h = Arr::Zero(C, N);
    Arr abar(C, N);
    for (std::int64_t t = 0; t < L; ++t) {
      Eigen::Map<const Vec> xt(x.data() + (b * L + t) * C, C);
      Eigen::Map<const Vec> dt(delta.data() + (b * L + t) * C, C);
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> Bt(Bm.data() + (b * L + t) * N, N);
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> Ct(Cm.data() + (b * L + t) * N, N);
      abar = (Aa.colwise() * dt).exp();
      Vec dx = dt * xt;
      h = abar * h + (dx.matrix() * Bt.transpose()).array();
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> yt(out.data() + (b * L + t) * C, C);
      yt.noalias() = h.matrix() * Ct;
      yt.array() += Dv * xt;
      if (need_tape)
        std::copy(h.data(), h.data() + C * N, hist->data() + ((b * L + t) * C) * N);
    }
  }

  auto xn = x.node();
  auto dn = delta.node();
  auto bn = Bm.node();
  auto cn = Cm.node();
  auto an = A.node();
  auto ddn = D.node();
  return detail::make_result<S>(
      {B, L, C}, std::move(out), {x, delta, Bm, Cm, A, D},
      [xn, dn, bn, cn, an, ddn, hist, B, L, C, N](TensorNode<S>& node) {
        Eigen::Map<const Arr> Aa(an->data.data(), C, N);
        Eigen::Map<const Vec> Dv(ddn->data.data(), C);
        for (auto* p : {xn.get(), dn.get(), bn.get(), cn.get(), an.get(), ddn.get()})
          if (p->requires_grad) p->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b) {
          Arr dh = Arr::Zero(C, N);
          Arr abar(C, N), hprev(C, N);
          for (std::int64_t t = L - 1; t >= 0; --t) {
            Eigen::Map<const Vec> xt(xn->data.data() + (b * L + t) * C, C);
            Eigen::Map<const Vec> dt(dn->data.data() + (b * L + t) * C, C);
            Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> Bt(
                bn->data.data() + (b * L + t) * N, N);
            Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> Ct(
                cn->data.data() + (b * L + t) * N, N);
            Eigen::Map<const Vec> gy(node.grad.data() + (b * L + t) * C, C);
            Eigen::Map<const Arr> ht(hist->data() + ((b * L + t) * C) * N, C, N);
            if (t > 0) {
              Eigen::Map<const Arr> hp(hist->data() + ((b * L + t - 1) * C) * N, C, N);
              hprev = hp;
            } else {
              hprev.setZero();
            }
            abar = (Aa.colwise() * dt).exp();

            if (ddn->requires_grad) {
              Eigen::Map<Vec> gD(ddn->grad.data(), C);
              gD += gy * xt;
            }
            if (cn->requires_grad) {
              Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gC(
                  cn->grad.data() + (b * L + t) * N, N);
              gC.noalias() += ht.matrix().transpose() * gy.matrix();
            }
            // dh accumulates the contribution through y_t
            dh += (gy.matrix() * Ct.transpose()).array();

            Arr P = dh * abar * hprev;  // shared factor for dA and ddelta
            if (an->requires_grad) {
              Eigen::Map<Arr> gA(an->grad.data(), C, N);
              gA += P.colwise() * dt;
            }
            Vec r = (dh.matrix() * Bt).array();  // [C], sum_n dh*B
            if (dn->requires_grad) {
              Eigen::Map<Vec> gdt(dn->grad.data() + (b * L + t) * C, C);
              gdt += (P * Aa).rowwise().sum() + xt * r;
            }
            if (xn->requires_grad) {
              Eigen::Map<Vec> gx(xn->grad.data() + (b * L + t) * C, C);
              gx += Dv * gy + dt * r;
            }
            if (bn->requires_grad) {
              Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gB(
                  bn->grad.data() + (b * L + t) * N, N);
              gB.noalias() += dh.matrix().transpose() * (dt * xt).matrix();
            }
            dh *= abar;
          }
        }
      });

}

// Convenience single-sequence form: x, delta [L,C]; Bm, Cm [L,N].
template <class S>
Tensor<S> selective_scan_1d(const Tensor<S>& x, const Tensor<S>& delta,
                            const Tensor<S>& Bm, const Tensor<S>& Cm,
                            const Tensor<S>& A, const Tensor<S>& D) {
  std::int64_t L = x.shape()[0], C = x.shape()[1], N = Bm.shape()[1];
  Tensor<S> y = selective_scan(reshape(x, {1, L, C}), reshape(delta, {1, L, C}),
                               reshape(Bm, {1, L, N}), reshape(Cm, {1, L, N}), A, D);
  return reshape(y, {L, C});
}

// ----- scan orderings -----

enum class ScanDirection { RowFwd, RowBwd, ColFwd, ColBwd };

inline constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::RowFwd, ScanDirection::RowBwd, ScanDirection::ColFwd,
    ScanDirection::ColBwd};

// Bijection from sequence position l to (h, w); the bwd orders reverse fwd.
inline std::pair<std::int64_t, std::int64_t> scan_coord(ScanDirection dir, std::int64_t l,
                                                        std::int64_t H, std::int64_t W) {
  std::int64_t L = H * W;
  switch (dir) {
    case ScanDirection::RowFwd: return {l / W, l % W};
    case ScanDirection::RowBwd: return {(L - 1 - l) / W, (L - 1 - l) % W};
    case ScanDirection::ColFwd: return {l % H, l / H};
    case ScanDirection::ColBwd: return {(L - 1 - l) % H, (L - 1 - l) / H};
  }
  return {0, 0};
}

// [B,C,H,W] -> [B,L,C] along the given scan order.
template <class S>
Tensor<S> to_sequence(const Tensor<S>& x, ScanDirection dir) {
  std::int64_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  std::int64_t L = H * W;
  std::vector<std::int64_t> src(static_cast<std::size_t>(L));  // spatial index per l
  for (std::int64_t l = 0; l < L; ++l) {
    auto [h, w] = scan_coord(dir, l, H, W);
    src[static_cast<std::size_t>(l)] = h * W + w;
  }
  std::vector<S> out(static_cast<std::size_t>(B * L * C));
  const S* px = x.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t l = 0; l < L; ++l) {
      std::int64_t s = src[static_cast<std::size_t>(l)];
      S* o = out.data() + (b * L + l) * C;
      const S* xs = px + b * C * L;
      for (std::int64_t c = 0; c < C; ++c) o[c] = xs[c * L + s];
    }
  auto xn = x.node();
  return detail::make_result<S>({B, L, C}, std::move(out), {x},
                                [xn, src, B, L, C](TensorNode<S>& n) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  S* gx = xn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::int64_t b = 0; b < B; ++b)
                                    for (std::int64_t l = 0; l < L; ++l) {
                                      std::int64_t s = src[static_cast<std::size_t>(l)];
                                      const S* gr = g + (b * L + l) * C;
                                      S* gs = gx + b * C * L;
                                      for (std::int64_t c = 0; c < C; ++c)
                                        gs[c * L + s] += gr[c];
                                    }
                                });
}

// Inverse of to_sequence: [B,L,C] -> [B,C,H,W].
template <class S>
Tensor<S> from_sequence(const Tensor<S>& seq, ScanDirection dir, std::int64_t H,
                        std::int64_t W) {
  std::int64_t B = seq.shape()[0], L = seq.shape()[1], C = seq.shape()[2];
  if (L != H * W) throw ShapeError("from_sequence: L != H*W");
  std::vector<std::int64_t> dst(static_cast<std::size_t>(L));
  for (std::int64_t l = 0; l < L; ++l) {
    auto [h, w] = scan_coord(dir, l, H, W);
    dst[static_cast<std::size_t>(l)] = h * W + w;
  }
  std::vector<S> out(static_cast<std::size_t>(B * C * L));
  const S* p = seq.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t l = 0; l < L; ++l) {
      std::int64_t s = dst[static_cast<std::size_t>(l)];
      const S* row = p + (b * L + l) * C;
      S* xs = out.data() + b * C * L;
      for (std::int64_t c = 0; c < C; ++c) xs[c * L + s] = row[c];
    }
  auto sn = seq.node();
  return detail::make_result<S>({B, C, H, W}, std::move(out), {seq},
                                [sn, dst, B, L, C](TensorNode<S>& n) {
                                  if (!sn->requires_grad) return;
                                  sn->ensure_grad();
                                  S* gs = sn->grad.data();
                                  const S* g = n.grad.data();
                                  for (std::int64_t b = 0; b < B; ++b)
                                    for (std::int64_t l = 0; l < L; ++l) {
                                      std::int64_t s = dst[static_cast<std::size_t>(l)];
                                      S* row = gs + (b * L + l) * C;
                                      const S* gx = g + b * C * L;
                                      for (std::int64_t c = 0; c < C; ++c)
                                        row[c] += gx[c * L + s];
                                    }
                                });
}

// ----- SS2D: four-directional selective scan over a feature map -----

template <class S>
struct SS2D {
  std::int64_t channels = 0;   // C
  std::int64_t state_dim = 0;  // N
  Tensor<S> A_log;             // [C,N], A = -exp(A_log); shared across directions
  Tensor<S> D;                 // [C] skip gain, shared
  struct DirProj {
    Linear<S> dt;  // C -> C, softplus-activated, bias tuned for small steps
    Linear<S> B;   // C -> N
    Linear<S> C;   // C -> N
  };
  std::array<DirProj, 4> dirs;

  SS2D() = default;
  SS2D(std::int64_t c, std::int64_t n, const std::string& name, std::uint64_t seed)
      : channels(c), state_dim(n) {
    // S4D-real style: A_log[c,k] = log(k+1) so A spans -(1..N)
    std::vector<S> alog(static_cast<std::size_t>(c * n));
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t k = 0; k < n; ++k)
        alog[static_cast<std::size_t>(ci * n + k)] = static_cast<S>(std::log(double(k + 1)));
    A_log = Tensor<S>::from_data({c, n}, std::move(alog), true);
    D = Tensor<S>::ones({c}, true);
    for (int d = 0; d < 4; ++d) {
      std::string dn = name + ".dir" + std::to_string(d);
      dirs[d].dt = Linear<S>(c, c, dn + ".dt", seed);
      dirs[d].B = Linear<S>(c, n, dn + ".B", seed, /*bias=*/false);
      dirs[d].C = Linear<S>(c, n, dn + ".C", seed, /*bias=*/false);
      // softplus(bias) lands in [0.01, 0.1]
      Rng rng(param_seed(seed, dn + ".dt.bias"));
      for (std::int64_t i = 0; i < c; ++i) {
        double u = rng.uniform(0.01, 0.1);
        dirs[d].dt.bias.data()[i] = static_cast<S>(std::log(std::expm1(u)));
      }
    }
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    if (x.shape()[1] != channels)
      throw ShapeError("ss2d: channel count " + std::to_string(x.shape()[1]) + " != " +
                       std::to_string(channels));
    std::int64_t B = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
    std::int64_t L = H * W;
    Tensor<S> A = neg(exp(A_log));
    Tensor<S> out;
    for (int d = 0; d < 4; ++d) {
      Tensor<S> seq = to_sequence(x, kAllDirections[static_cast<std::size_t>(d)]);
      Tensor<S> flat = reshape(seq, {B * L, channels});
      Tensor<S> delta = reshape(softplus(dirs[d].dt.forward(flat)), {B, L, channels});
      Tensor<S> Bm = reshape(dirs[d].B.forward(flat), {B, L, state_dim});
      Tensor<S> Cm = reshape(dirs[d].C.forward(flat), {B, L, state_dim});
      Tensor<S> y = selective_scan(seq, delta, Bm, Cm, A, D);
      Tensor<S> plane = from_sequence(y, kAllDirections[static_cast<std::size_t>(d)], H, W);
      out = out.defined() ? add(out, plane) : plane;
    }
    return out;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    out.push_back({prefix + ".A_log", A_log, true});
    out.push_back({prefix + ".D", D, true});
    for (int d = 0; d < 4; ++d) {
      std::string dn = prefix + ".dir" + std::to_string(d);
      dirs[d].dt.collect(dn + ".dt", out);
      dirs[d].B.collect(dn + ".B", out);
      dirs[d].C.collect(dn + ".C", out);
    }
  }

  // 2*L*N*C per direction for the recurrence, plus the projections
  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t L = H * W;
    std::int64_t per_dir = 2 * L * state_dim * channels +
                           dirs[0].dt.flops(L) + dirs[0].B.flops(L) + dirs[0].C.flops(L);
    return 4 * per_dir;
  }
};

// ----- VSS block -----
// y = x + proj_out( SS2D(SiLU(dwconv3x3(proj_a(LN(x))))) .* SiLU(proj_b(LN(x))) )

template <class S>
struct VSSBlock {
  std::int64_t channels = 0;
  std::int64_t inner = 0;  // channels * expansion
  LayerNormChannel<S> ln;
  Conv2d<S> proj_a, proj_b;  // 1x1 C -> inner
  Conv2d<S> dw;              // 3x3 depthwise on inner
  SS2D<S> scan;
  Conv2d<S> proj_out;  // 1x1 inner -> C

  VSSBlock() = default;
  VSSBlock(std::int64_t c, std::int64_t state_dim, std::int64_t expansion,
           const std::string& name, std::uint64_t seed)
      : channels(c), inner(c * expansion), ln(c) {
    proj_a = Conv2d<S>({.in_ch = c, .out_ch = inner, .kh = 1, .kw = 1, .bias = true},
                       name + ".proj_a", seed);
    proj_b = Conv2d<S>({.in_ch = c, .out_ch = inner, .kh = 1, .kw = 1, .bias = true},
                       name + ".proj_b", seed);
    dw = Conv2d<S>({.in_ch = inner, .out_ch = inner, .kh = 3, .kw = 3, .padding = 1,
                    .groups = inner, .bias = true},
                   name + ".dw", seed);
    scan = SS2D<S>(inner, state_dim, name + ".ss2d", seed);
    proj_out = Conv2d<S>({.in_ch = inner, .out_ch = c, .kh = 1, .kw = 1, .bias = true},
                         name + ".proj_out", seed);
    // down-scale the residual branch so the block starts near identity; the
    // directional scans can otherwise amplify activations by several x
    for (std::int64_t i = 0; i < proj_out.weight.numel(); ++i)
      proj_out.weight.data()[i] *= static_cast<S>(0.1);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> nx = ln.forward(x);
    Tensor<S> a = silu(dw.forward(proj_a.forward(nx)));
    Tensor<S> gated = mul(scan.forward(a), silu(proj_b.forward(nx)));
    return add(x, proj_out.forward(gated));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    ln.collect(prefix + ".ln", out);
    proj_a.collect(prefix + ".proj_a", out);
    proj_b.collect(prefix + ".proj_b", out);
    dw.collect(prefix + ".dw", out);
    scan.collect(prefix + ".ss2d", out);
    proj_out.collect(prefix + ".proj_out", out);
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    return proj_a.flops(H, W) + proj_b.flops(H, W) + dw.flops(H, W) + scan.flops(H, W) +
           proj_out.flops(H, W);
  }
};

}  // namespace ldg
