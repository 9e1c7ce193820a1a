#pragma once

// MobileNetV3-style hierarchical feature extractor: stride-2 stem plus four
// stages of inverted-residual blocks, yielding a /4, /8, /16, /32 pyramid.

#include <array>
#include <vector>

#include "ldg/nn.hpp"

namespace ldg {

struct BackboneConfig {
  std::array<std::int64_t, 4> stage_channels{16, 24, 48, 96};
  std::array<std::int64_t, 4> blocks_per_stage{2, 2, 3, 2};
  double width_multiplier = 1.0;
  std::array<bool, 4> use_se{false, false, false, false};
  std::int64_t expansion = 4;  // inverted-residual expansion ratio

  // nearest multiple of 8, minimum 8 (ties round up)
  static std::int64_t round8(double v) {
    auto r = static_cast<std::int64_t>(std::floor(v / 8.0 + 0.5)) * 8;
    return std::max<std::int64_t>(r, 8);
  }
  std::int64_t channels(int stage) const {
    return round8(width_multiplier * static_cast<double>(stage_channels[static_cast<std::size_t>(stage)]));
  }
};

template <class S>
struct SqueezeExcite {
  Conv2d<S> reduce, expand;  // 1x1 convs on pooled features

  SqueezeExcite() = default;
  SqueezeExcite(std::int64_t c, const std::string& name, std::uint64_t seed) {
    std::int64_t mid = std::max<std::int64_t>(c / 4, 8);
    reduce = Conv2d<S>({.in_ch = c, .out_ch = mid, .kh = 1, .kw = 1, .bias = true},
                       name + ".reduce", seed);
    expand = Conv2d<S>({.in_ch = mid, .out_ch = c, .kh = 1, .kw = 1, .bias = true},
                       name + ".expand", seed);
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> s = global_avg_pool(x);
    s = sigmoid(expand.forward(relu(reduce.forward(s))));
    return mul(x, s);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    reduce.collect(prefix + ".reduce", out);
    expand.collect(prefix + ".expand", out);
  }

  std::int64_t flops() const { return reduce.flops(1, 1) + expand.flops(1, 1); }
};

template <class S>
struct InvertedResidual {
  std::int64_t in_ch = 0, out_ch = 0, stride = 1;
  bool residual = false, has_se = false;
  Conv2d<S> expand_conv;  // 1x1 in -> mid
  BatchNorm2d<S> bn1;
  Conv2d<S> dw;  // 3x3 depthwise, stride s
  BatchNorm2d<S> bn2;
  SqueezeExcite<S> se;
  Conv2d<S> project;  // 1x1 mid -> out, linear
  BatchNorm2d<S> bn3;

  InvertedResidual() = default;
  InvertedResidual(std::int64_t in, std::int64_t out, std::int64_t mid, std::int64_t s,
                   bool use_se, const std::string& name, std::uint64_t seed)
      : in_ch(in), out_ch(out), stride(s), residual(s == 1 && in == out), has_se(use_se) {
    expand_conv = Conv2d<S>({.in_ch = in, .out_ch = mid, .kh = 1, .kw = 1, .bias = false},
                            name + ".expand", seed);
    bn1 = BatchNorm2d<S>(mid);
    dw = Conv2d<S>({.in_ch = mid, .out_ch = mid, .kh = 3, .kw = 3, .stride = s, .padding = 1,
                    .groups = mid, .bias = false},
                   name + ".dw", seed);
    bn2 = BatchNorm2d<S>(mid);
    if (has_se) se = SqueezeExcite<S>(mid, name + ".se", seed);
    project = Conv2d<S>({.in_ch = mid, .out_ch = out, .kh = 1, .kw = 1, .bias = false},
                        name + ".project", seed);
    bn3 = BatchNorm2d<S>(out);
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> h = hardswish(bn1.forward(expand_conv.forward(x)));
    h = hardswish(bn2.forward(dw.forward(h)));
    if (has_se) h = se.forward(h);
    h = bn3.forward(project.forward(h));
    return residual ? add(x, h) : h;
  }

  void set_training(bool on) {
    bn1.training = on;
    bn2.training = on;
    bn3.training = on;
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    expand_conv.collect(prefix + ".expand", out);
    bn1.collect(prefix + ".bn1", out);
    dw.collect(prefix + ".dw", out);
    bn2.collect(prefix + ".bn2", out);
    if (has_se) se.collect(prefix + ".se", out);
    project.collect(prefix + ".project", out);
    bn3.collect(prefix + ".bn3", out);
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t ho = (H + 2 - 3) / stride + 1, wo = (W + 2 - 3) / stride + 1;
    std::int64_t f = expand_conv.flops(H, W) + dw.flops(H, W) + project.flops(ho, wo);
    if (has_se) f += se.flops();
    return f;
  }
};

template <class S>
struct Backbone {
  BackboneConfig cfg;
  int num_layers = 4;
  Conv2d<S> stem;  // 3x3 stride 2, 3 -> c0
  BatchNorm2d<S> stem_bn;
  std::vector<std::vector<InvertedResidual<S>>> stages;  // stage j first block has stride 2

  // input channel count expected by layer j (1-based)
  std::int64_t layer_in_channels(int j) const {
    return j == 1 ? 3 : cfg.channels(j - 2);
  }
  std::int64_t layer_out_channels(int j) const { return cfg.channels(j - 1); }

  Tensor<S> forward_layer(int j, const Tensor<S>& x) {
    if (j < 1 || j > num_layers)
      throw ContractError("backbone: layer index " + std::to_string(j) + " out of range");
    if (x.shape()[1] != layer_in_channels(j))
      throw ShapeError("backbone layer " + std::to_string(j) + ": expected " +
                       std::to_string(layer_in_channels(j)) + " input channels, got " +
                       std::to_string(x.shape()[1]));
    Tensor<S> h = x;
    if (j == 1) h = hardswish(stem_bn.forward(stem.forward(h)));
    for (auto& blk : stages[static_cast<std::size_t>(j - 1)]) h = blk.forward(h);
    return h;
  }

  // full pyramid: levels /4 .. /2^{num_layers+1}
  std::vector<Tensor<S>> forward(const Tensor<S>& x) {
    std::vector<Tensor<S>> levels;
    Tensor<S> h = x;
    for (int j = 1; j <= num_layers; ++j) {
      h = forward_layer(j, h);
      levels.push_back(h);
    }
    return levels;
  }

  void set_training(bool on) {
    stem_bn.training = on;
    for (auto& st : stages)
      for (auto& blk : st) blk.set_training(on);
  }

  void collect(const std::string& prefix, ParamList<S>& out) const {
    stem.collect(prefix + ".stem", out);
    stem_bn.collect(prefix + ".stem_bn", out);
    for (std::size_t j = 0; j < stages.size(); ++j)
      for (std::size_t b = 0; b < stages[j].size(); ++b)
        stages[j][b].collect(prefix + ".stage" + std::to_string(j + 1) + ".block" +
                                 std::to_string(b),
                             out);
  }

  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t f = stem.flops(H, W);
    std::int64_t h = (H + 2 - 3) / 2 + 1, w = (W + 2 - 3) / 2 + 1;
    for (const auto& st : stages)
      for (const auto& blk : st) {
        f += blk.flops(h, w);
        if (blk.stride == 2) {
          h = (h + 2 - 3) / 2 + 1;
          w = (w + 2 - 3) / 2 + 1;
        }
      }
    return f;
  }
};

template <class S>
Backbone<S> build_backbone(const BackboneConfig& cfg, int num_layers, const std::string& name,
                           std::uint64_t seed) {
  if (num_layers != 3 && num_layers != 4)
    throw ContractError("build_backbone: num_layers must be 3 or 4, got " +
                        std::to_string(num_layers));
  Backbone<S> bb;
  bb.cfg = cfg;
  bb.num_layers = num_layers;
  std::int64_t c0 = cfg.channels(0);
  bb.stem = Conv2d<S>({.in_ch = 3, .out_ch = c0, .kh = 3, .kw = 3, .stride = 2, .padding = 1,
                       .bias = false},
                      name + ".stem", seed);
  bb.stem_bn = BatchNorm2d<S>(c0);
  std::int64_t in = c0;
  for (int j = 0; j < num_layers; ++j) {
    std::int64_t out = cfg.channels(j);
    std::vector<InvertedResidual<S>> blocks;
    for (std::int64_t b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(j)]; ++b) {
      std::int64_t mid = BackboneConfig::round8(static_cast<double>(in * cfg.expansion));
      std::string bname =
          name + ".stage" + std::to_string(j + 1) + ".block" + std::to_string(b);
      blocks.emplace_back(in, out, mid, b == 0 ? 2 : 1,
                          cfg.use_se[static_cast<std::size_t>(j)], bname, seed);
      in = out;
    }
    bb.stages.push_back(std::move(blocks));
  }
  return bb;
}

}  // namespace ldg
