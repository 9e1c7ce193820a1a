#pragma once

// Full change-detection network: difference-guided Siamese encoder plus
// difference-aware dynamic fusion decoder, emitting 2-class logits at input
// resolution.

#include <map>
#include <sstream>

#include "ldg/dadf.hpp"

namespace ldg {

struct ModelConfig {
  BackboneConfig backbone;
  bool use_dgm = true;
  bool use_dadf = true;
  std::int64_t state_dim = 8;  // SSM N
  std::int64_t expansion = 2;  // VSS E
  std::int64_t c_dec = 64;
  std::uint64_t seed = 42;
  std::string dtype = "f32";  // training scalar type: f32 or f64

  // small configuration for fast CPU training on synthetic data
  static ModelConfig tiny() {
    ModelConfig c;
    c.backbone.width_multiplier = 0.5;
    c.c_dec = 32;
    return c;
  }

  // full-size configuration in the published model's cost class
  static ModelConfig full() {
    ModelConfig c;
    c.backbone.stage_channels = {16, 32, 128, 320};
    c.backbone.blocks_per_stage = {2, 2, 4, 3};
    c.c_dec = 64;
    return c;
  }
};

// flat key=value form used by config files and checkpoint headers
inline std::map<std::string, std::string> config_to_map(const ModelConfig& c) {
  auto csv = [](const auto& arr) {
    std::ostringstream s;
    for (std::size_t i = 0; i < arr.size(); ++i) s << (i ? "," : "") << arr[i];
    return s.str();
  };
  std::map<std::string, std::string> m;
  m["stage_channels"] = csv(c.backbone.stage_channels);
  m["blocks_per_stage"] = csv(c.backbone.blocks_per_stage);
  m["width_multiplier"] = std::to_string(c.backbone.width_multiplier);
  m["use_se"] = csv(c.backbone.use_se);
  m["backbone_expansion"] = std::to_string(c.backbone.expansion);
  m["use_dgm"] = c.use_dgm ? "1" : "0";
  m["use_dadf"] = c.use_dadf ? "1" : "0";
  m["state_dim"] = std::to_string(c.state_dim);
  m["expansion"] = std::to_string(c.expansion);
  m["c_dec"] = std::to_string(c.c_dec);
  m["seed"] = std::to_string(c.seed);
  m["dtype"] = c.dtype;
  return m;
}

inline ModelConfig config_from_map(const std::map<std::string, std::string>& m) {
  ModelConfig c;
  auto parse4 = [](const std::string& s, auto& arr) {
    std::stringstream ss(s);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',') && i < arr.size())
      arr[i++] = static_cast<typename std::decay_t<decltype(arr)>::value_type>(
          std::stoll(tok));
    if (i != arr.size()) throw ContractError("config: expected 4 values, got \"" + s + "\"");
  };
  for (const auto& [k, v] : m) {
    if (k == "stage_channels") parse4(v, c.backbone.stage_channels);
    else if (k == "blocks_per_stage") parse4(v, c.backbone.blocks_per_stage);
    else if (k == "width_multiplier") c.backbone.width_multiplier = std::stod(v);
    else if (k == "use_se") parse4(v, c.backbone.use_se);
    else if (k == "backbone_expansion") c.backbone.expansion = std::stoll(v);
    else if (k == "use_dgm") c.use_dgm = v != "0";
    else if (k == "use_dadf") c.use_dadf = v != "0";
    else if (k == "state_dim") c.state_dim = std::stoll(v);
    else if (k == "expansion") c.expansion = std::stoll(v);
    else if (k == "c_dec") c.c_dec = std::stoll(v);
    else if (k == "seed") c.seed = std::stoull(v);
    else if (k == "dtype") {
      if (v != "f32" && v != "f64") throw ContractError("config: dtype must be f32 or f64");
      c.dtype = v;
    } else {
      throw ContractError("config: unknown key \"" + k + "\"");
    }
  }
  return c;
}

template <class S>
struct LDGNet {
  ModelConfig cfg;
  DGEncoder<S> encoder;
  DADFDecoder<S> decoder;

  LDGNet() = default;
  explicit LDGNet(const ModelConfig& c) : cfg(c) {
    encoder = DGEncoder<S>(c.backbone, c.use_dgm, "encoder", c.seed);
    std::array<std::int64_t, 4> level_ch{c.backbone.channels(0), c.backbone.channels(1),
                                         c.backbone.channels(2), c.backbone.channels(3)};
    decoder = DADFDecoder<S>(level_ch, c.c_dec, c.state_dim, c.expansion, c.use_dadf,
                             "decoder", c.seed);
  }

  Tensor<S> forward(const Tensor<S>& pre, const Tensor<S>& post) {
    return decoder.decode(encoder.encode(pre, post));
  }

  void set_training(bool on) { encoder.set_training(on); }

  ParamList<S> collect() const {
    ParamList<S> out;
    encoder.collect("encoder", out);
    decoder.collect("decoder", out);
    return out;
  }

  void zero_grad() {
    for (auto& p : collect()) p.tensor.zero_grad();
  }

  // closed-form multiply-accumulate x2 count for one forward at H x W
  std::int64_t flops(std::int64_t H, std::int64_t W) const {
    std::int64_t f = 2 * encoder.ori.flops(H, W);  // Siamese: pre and post streams
    if (cfg.use_dgm) {
      f += encoder.diffb.flops(H, W);
      for (int j = 1; j <= 3; ++j) {
        std::int64_t s = std::int64_t(1) << (j + 1);
        f += encoder.dgms[static_cast<std::size_t>(j - 1)].flops(H / s, W / s);
      }
    }
    return f + decoder.flops(H, W);
  }
};

}  // namespace ldg
