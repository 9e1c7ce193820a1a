#pragma once

// Difference-aware dynamic fusion decoder: per level, feature differences
// re-weight the two streams, a 1x1 reduction + VSS block fuses them, and a
// sigmoid difference-attention map mixes the fused features with the
// projected difference. Levels cascade deep-to-shallow with x2 upsampling
// into a 2-class head at full resolution.

#include "ldg/dgm.hpp"
#include "ldg/vssm.hpp"

namespace ldg {

template <class S>
Tensor<S> refined_diff(const Tensor<S>& f_pre, const Tensor<S>& f_post) {
  if (f_pre.shape() != f_post.shape())
    throw ShapeError("refined_diff: shape mismatch " + shape_str(f_pre.shape()) + " vs " +
                     shape_str(f_post.shape()));
  return abs(sub(f_pre, f_post));
}

// F_weighted = f .* (1 + F_diff_hat); exact identity at F_diff_hat == 0.
template <class S>
Tensor<S> diff_weighting(const Tensor<S>& f, const Tensor<S>& f_diff_hat) {
  if (f.shape() != f_diff_hat.shape())
    throw ShapeError("diff_weighting: shape mismatch " + shape_str(f.shape()) + " vs " +
                     shape_str(f_diff_hat.shape()));
  return mul(f, add_scalar(f_diff_hat, S(1)));
}

// P = attn .* P' + (1 - attn) .* diff_proj + P', attn broadcast over channels.
template <class S>
Tensor<S> dynamic_fuse_with(const Tensor<S>& p_prime, const Tensor<S>& f_diff_proj,
                            const Tensor<S>& attn) {
  if (p_prime.shape() != f_diff_proj.shape())
    throw ShapeError("dynamic_fuse: shape mismatch " + shape_str(p_prime.shape()) + " vs " +
                     shape_str(f_diff_proj.shape()));
  return add(add(mul(attn, p_prime), mul(rsub_scalar(S(1), attn), f_diff_proj)), p_prime);
}

template <class S>
struct DADFLevel {
  bool use_dadf = true;
  std::int64_t in_ch = 0, c_dec = 0;
  Conv2d<S> reduce;  // 1x1, 2*C_j -> C_dec
  VSSBlock<S> vss;   // at width C_dec
  Conv2d<S> diff_proj;  // 1x1, C_j -> C_dec     (difference path only)
  Conv2d<S> attn;       // 3x3, C_dec -> 1       (difference path only)

  DADFLevel() = default;
  DADFLevel(std::int64_t cj, std::int64_t cdec, std::int64_t state_dim, std::int64_t expansion,
            bool with_dadf, const std::string& name, std::uint64_t seed)
      : use_dadf(with_dadf), in_ch(cj), c_dec(cdec) {
    reduce = Conv2d<S>({.in_ch = 2 * cj, .out_ch = cdec, .kh = 1, .kw = 1, .bias = true},
                       name + ".reduce", seed);
    vss = VSSBlock<S>(cdec, state_dim, expansion, name + ".vss", seed);
    if (use_dadf) {
      diff_proj = Conv2d<S>({.in_ch = cj, .out_ch = cdec, .kh = 1, .kw = 1, .bias = true},
                            name + ".diff_proj", seed);
      attn = Conv2d<S>(
          {.in_ch = cdec, .out_ch = 1, .kh = 3, .kw = 3, .padding = 1, .bias = true},
          name + ".attn", seed);
    }
  }

  // P' = VSSBlock(Conv1x1(concat(w_pre, w_post)))
  Tensor<S> fuse_vss(const Tensor<S>& w_pre, const Tensor<S>& w_post) const {
    if (w_pre.shape() != w_post.shape())
      throw ShapeError("fuse_vss: shape mismatch " + shape_str(w_pre.shape()) + " vs " +
                       shape_str(w_post.shape()));
    return vss.forward(reduce.forward(concat<S>({w_pre, w_post}, 1)));
  }

  Tensor<S> dynamic_fuse(const Tensor<S>& p_prime, const Tensor<S>& f_diff_proj) const {
    return dynamic_fuse_with(p_prime, f_diff_proj, sigmoid(attn.forward(f_diff_proj)));
  }

  Tensor<S> forward(const Tensor<S>& f_pre, const Tensor<S>& f_post) const {
    if (!use_dadf) return fuse_vss(f_pre, f_post);
    Tensor<S> fdh = refined_diff(f_pre, f_post);
    Tensor<S> p_prime = fuse_vss(diff_weighting(f_pre, fdh), diff_weighting(f_post, fdh));
    return dynamic_fuse(p_prime, diff_proj.forward(fdh));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    reduce.collect(prefix + ".reduce", out);
    vss.collect(prefix + ".vss", out);
    if (use_dadf) {
      diff_proj.collect(prefix + ".diff_proj", out);
      attn.collect(prefix + ".attn", out);
    }
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t f = reduce.flops(H, W) + vss.flops(H, W);
    if (use_dadf) f += diff_proj.flops(H, W) + attn.flops(H, W);
    return f;
  }
};

template <class S>
struct DADFDecoder {
  bool use_dadf = true;
  std::int64_t c_dec = 64;
  std::vector<DADFLevel<S>> levels;  // index j-1 for level j = 1..4
  Conv2d<S> head;                    // 1x1, C_dec -> 2 classes

  DADFDecoder() = default;
  DADFDecoder(const std::array<std::int64_t, 4>& level_channels, std::int64_t cdec,
              std::int64_t state_dim, std::int64_t expansion, bool with_dadf,
              const std::string& name, std::uint64_t seed)
      : use_dadf(with_dadf), c_dec(cdec) {
    for (int j = 1; j <= 4; ++j)
      levels.emplace_back(level_channels[static_cast<std::size_t>(j - 1)], cdec, state_dim,
                          expansion, with_dadf, name + ".level" + std::to_string(j), seed);
    head = Conv2d<S>({.in_ch = cdec, .out_ch = 2, .kh = 1, .kw = 1, .bias = true},
                     name + ".head", seed);
    // small head init keeps initial logits near zero (loss starts near ln 2)
    for (std::int64_t i = 0; i < head.weight.numel(); ++i)
      head.weight.data()[i] *= static_cast<S>(0.1);
  }

  Tensor<S> decode(const EncoderOutput<S>& enc) const {
    Tensor<S> cascade;
    for (int j = 4; j >= 1; --j) {
      const Tensor<S>& fp = j == 4 ? enc.pre4 : enc.pre_mod[static_cast<std::size_t>(j - 1)];
      const Tensor<S>& fq = j == 4 ? enc.post4 : enc.post_mod[static_cast<std::size_t>(j - 1)];
      Tensor<S> p = levels[static_cast<std::size_t>(j - 1)].forward(fp, fq);
      cascade = cascade.defined() ? add(p, upsample_bilinear(cascade, 2)) : p;
    }
    return upsample_bilinear(head.forward(cascade), 4);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    for (int j = 1; j <= 4; ++j)
      levels[static_cast<std::size_t>(j - 1)].collect(prefix + ".level" + std::to_string(j),
                                                      out);
    head.collect(prefix + ".head", out);
  }

  // H, W at full input resolution
  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t f = 0;
    for (int j = 1; j <= 4; ++j) {
      std::int64_t s = std::int64_t(1) << (j + 1);
      f += levels[static_cast<std::size_t>(j - 1)].flops(H / s, W / s);
    }
    return f + head.flops(H / 4, W / 4);
  }
};

}  // namespace ldg
