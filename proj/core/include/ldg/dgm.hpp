#pragma once

// Difference-guided encoder: an absolute-difference input image feeds an
// independent difference branch; per-layer guidance modules (dilated-conv
// adapter + spatial/channel attention, gated by a learnable scalar alpha)
// modulate a Siamese original branch. Alpha starts at 0, so the encoder
// begins as, and can be ablated to, a plain Siamese backbone.

#include "ldg/backbone.hpp"

namespace ldg {

template <class S>
Tensor<S> abs_diff_image(const Tensor<S>& pre, const Tensor<S>& post) {
  if (pre.shape() != post.shape())
    throw ShapeError("abs_diff_image: shape mismatch " + shape_str(pre.shape()) + " vs " +
                     shape_str(post.shape()));
  return abs(sub(pre, post));
}

// F_DA = x + g(x), g = 1x1 align -> BN+SiLU -> depthwise 3x3 dilation-2 ->
// BN+SiLU -> pointwise 1x1 (5x5 receptive field).
template <class S>
struct DifferenceAdapter {
  Conv2d<S> align, dwc, point;
  BatchNorm2d<S> bn1, bn2;

  DifferenceAdapter() = default;
  DifferenceAdapter(std::int64_t c, const std::string& name, std::uint64_t seed) {
    align = Conv2d<S>({.in_ch = c, .out_ch = c, .kh = 1, .kw = 1, .bias = false},
                      name + ".align", seed);
    bn1 = BatchNorm2d<S>(c);
    dwc = Conv2d<S>({.in_ch = c, .out_ch = c, .kh = 3, .kw = 3, .padding = 2, .dilation = 2,
                     .groups = c, .bias = false},
                    name + ".dwc", seed);
    bn2 = BatchNorm2d<S>(c);
    point = Conv2d<S>({.in_ch = c, .out_ch = c, .kh = 1, .kw = 1, .bias = true},
                      name + ".point", seed);
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> h = silu(bn1.forward(align.forward(x)));
    h = silu(bn2.forward(dwc.forward(h)));
    return add(x, point.forward(h));
  }

  void set_training(bool on) {
    bn1.training = on;
    bn2.training = on;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    align.collect(prefix + ".align", out);
    bn1.collect(prefix + ".bn1", out);
    dwc.collect(prefix + ".dwc", out);
    bn2.collect(prefix + ".bn2", out);
    point.collect(prefix + ".point", out);
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    return align.flops(H, W) + dwc.flops(H, W) + point.flops(H, W);
  }
};

// F_SCA = alpha .* A_spatial .* A_channel .* F_DA
//   A_spatial = sigmoid(conv3x3(concat(channel-max, channel-mean)))  [N,1,H,W]
//   A_channel = MLP(global_avg(F_DA)) with SiLU on both layers        [N,C,1,1]
template <class S>
struct SCA {
  std::int64_t channels = 0;
  Conv2d<S> spatial;      // 3x3, 2 -> 1
  Linear<S> mlp1, mlp2;   // C -> C/4 (min 8) -> C
  Tensor<S> alpha;        // learnable scalar gate, init 0

  SCA() = default;
  SCA(std::int64_t c, const std::string& name, std::uint64_t seed) : channels(c) {
    spatial = Conv2d<S>({.in_ch = 2, .out_ch = 1, .kh = 3, .kw = 3, .padding = 1, .bias = true},
                        name + ".spatial", seed);
    std::int64_t hidden = std::max<std::int64_t>(c / 4, 8);
    mlp1 = Linear<S>(c, hidden, name + ".mlp1", seed);
    mlp2 = Linear<S>(hidden, c, name + ".mlp2", seed);
    alpha = Tensor<S>::zeros({1}, true);
  }

  Tensor<S> forward(const Tensor<S>& f_da) const {
    std::int64_t N = f_da.shape()[0];
    Tensor<S> sp = sigmoid(
        spatial.forward(concat<S>({channel_max(f_da), channel_mean(f_da)}, 1)));
    Tensor<S> pooled = reshape(global_avg_pool(f_da), {N, channels});
    Tensor<S> ch =
        reshape(silu(mlp2.forward(silu(mlp1.forward(pooled)))), {N, channels, 1, 1});
    return mul(alpha, mul(sp, mul(ch, f_da)));
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    spatial.collect(prefix + ".spatial", out);
    mlp1.collect(prefix + ".mlp1", out);
    mlp2.collect(prefix + ".mlp2", out);
    out.push_back({prefix + ".alpha", alpha, true});
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    return spatial.flops(H, W) + mlp1.flops(1) + mlp2.flops(1);
  }
};

// F_mod = F_ori .* (1 + F_SCA); exact identity at F_SCA == 0.
template <class S>
Tensor<S> dgm_fuse(const Tensor<S>& f_ori, const Tensor<S>& f_sca) {
  if (f_ori.shape() != f_sca.shape())
    throw ShapeError("dgm_fuse: shape mismatch " + shape_str(f_ori.shape()) + " vs " +
                     shape_str(f_sca.shape()));
  return mul(f_ori, add_scalar(f_sca, S(1)));
}

template <class S>
struct DGM {
  DifferenceAdapter<S> da;
  SCA<S> sca;

  DGM() = default;
  DGM(std::int64_t c, const std::string& name, std::uint64_t seed)
      : da(c, name + ".da", seed), sca(c, name + ".sca", seed) {}

  Tensor<S> forward(const Tensor<S>& f_diff) { return sca.forward(da.forward(f_diff)); }

  void set_training(bool on) { da.set_training(on); }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    da.collect(prefix + ".da", out);
    sca.collect(prefix + ".sca", out);
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    return da.flops(H, W) + sca.flops(H, W);
  }
};

template <class S>
struct EncoderOutput {
  std::vector<Tensor<S>> pre_mod, post_mod;  // modulated pyramids, levels 1..3
  Tensor<S> pre4, post4;                     // unmodulated layer-4 features
  std::vector<Tensor<S>> diff;               // difference-branch pyramid (empty if DGM off)
};

template <class S>
struct DGEncoder {
  bool use_dgm = true;
  Backbone<S> ori;    // 4 layers, Siamese across pre/post
  Backbone<S> diffb;  // 3 layers on the |pre-post| image
  std::vector<DGM<S>> dgms;  // one per guided layer

  DGEncoder() = default;
  DGEncoder(const BackboneConfig& cfg, bool with_dgm, const std::string& name,
            std::uint64_t seed)
      : use_dgm(with_dgm) {
    ori = build_backbone<S>(cfg, 4, name + ".ori", seed);
    if (use_dgm) {
      diffb = build_backbone<S>(cfg, 3, name + ".diff", seed);
      for (int j = 1; j <= 3; ++j)
        dgms.emplace_back(cfg.channels(j - 1), name + ".dgm" + std::to_string(j), seed);
    }
  }

  EncoderOutput<S> encode(const Tensor<S>& pre, const Tensor<S>& post) {
    if (pre.shape() != post.shape())
      throw ShapeError("encode: shape mismatch " + shape_str(pre.shape()) + " vs " +
                       shape_str(post.shape()));
    EncoderOutput<S> out;
    Tensor<S> hp = pre, hq = post, hd;
    if (use_dgm) hd = abs_diff_image(pre, post);
    for (int j = 1; j <= 3; ++j) {
      Tensor<S> fp = ori.forward_layer(j, hp);
      Tensor<S> fq = ori.forward_layer(j, hq);
      if (use_dgm) {
        hd = diffb.forward_layer(j, hd);
        out.diff.push_back(hd);
        Tensor<S> fsca = dgms[static_cast<std::size_t>(j - 1)].forward(hd);
        hp = dgm_fuse(fp, fsca);
        hq = dgm_fuse(fq, fsca);
      } else {
        hp = fp;
        hq = fq;
      }
      out.pre_mod.push_back(hp);
      out.post_mod.push_back(hq);
    }
    out.pre4 = ori.forward_layer(4, hp);
    out.post4 = ori.forward_layer(4, hq);
    return out;
  }

  void set_training(bool on) {
    ori.set_training(on);
    if (use_dgm) {
      diffb.set_training(on);
      for (auto& g : dgms) g.set_training(on);
    }
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    ori.collect(prefix + ".ori", out);
    if (use_dgm) {
      diffb.collect(prefix + ".diff", out);
      for (std::size_t j = 0; j < dgms.size(); ++j)
        dgms[j].collect(prefix + ".dgm" + std::to_string(j + 1), out);
    }
  }
};

}  // namespace ldg
