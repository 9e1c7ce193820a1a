#include <doctest.h>

#include "fd_check.hpp"
#include "ldg/model.hpp"

using ldg::ModelConfig;
using ldg::Tensor;
using T = Tensor<double>;

TEST_CASE("forward emits full-resolution logits for every ablation") {
  for (bool dgm : {false, true})
    for (bool dadf : {false, true}) {
      ModelConfig cfg = ModelConfig::tiny();
      cfg.use_dgm = dgm;
      cfg.use_dadf = dadf;
      ldg::LDGNet<double> net(cfg);
      net.set_training(false);
      T pre = ldg_test::random_tensor({1, 3, 32, 32}, 701, 0.0, 1.0, false);
      T post = ldg_test::random_tensor({1, 3, 32, 32}, 702, 0.0, 1.0, false);
      T logits = net.forward(pre, post);
      CHECK(logits.shape() == ldg::Shape{1, 2, 32, 32});
      CHECK(ldg::all_finite(logits));
    }
}

TEST_CASE("same seed and config give bitwise-identical outputs") {
  ModelConfig cfg = ModelConfig::tiny();
  ldg::LDGNet<double> a(cfg), b(cfg);
  a.set_training(false);
  b.set_training(false);
  T pre = ldg_test::random_tensor({1, 3, 32, 32}, 703, 0.0, 1.0, false);
  T post = ldg_test::random_tensor({1, 3, 32, 32}, 704, 0.0, 1.0, false);
  CHECK(a.forward(pre, post).vec() == b.forward(pre, post).vec());
}

TEST_CASE("each module strictly adds parameters") {
  auto count = [](bool dgm, bool dadf) {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.use_dgm = dgm;
    cfg.use_dadf = dadf;
    ldg::LDGNet<double> net(cfg);
    return ldg::param_count(net.collect());
  };
  std::int64_t base = count(false, false);
  std::int64_t with_dgm = count(true, false);
  std::int64_t with_dadf = count(false, true);
  std::int64_t full = count(true, true);
  CHECK(base < with_dgm);
  CHECK(base < with_dadf);
  CHECK(with_dgm < full);
  CHECK(with_dadf < full);
}

TEST_CASE("shared-module parameters are seed-stable across ablations") {
  // toggling one module must not shift the initialization of the others
  ModelConfig cfg = ModelConfig::tiny();
  ldg::LDGNet<double> full(cfg);
  cfg.use_dgm = false;
  cfg.use_dadf = false;
  ldg::LDGNet<double> base(cfg);
  auto pf = full.collect();
  auto pb = base.collect();
  std::size_t fi = 0;
  for (const auto& p : pb) {
    while (fi < pf.size() && pf[fi].name != p.name) ++fi;
    REQUIRE(fi < pf.size());
    CHECK(pf[fi].tensor.vec() == p.tensor.vec());
  }
}

TEST_CASE("full model gradient check at 1x3x64x64") {
  ldg::LDGNet<double> net(ModelConfig{});
  net.set_training(true);
  for (auto& g : net.encoder.dgms) g.sca.alpha.data()[0] = 0.2;  // unlock guidance path
  T pre = ldg_test::random_tensor({1, 3, 64, 64}, 705, 0.0, 1.0);
  T post = ldg_test::random_tensor({1, 3, 64, 64}, 706, 0.0, 1.0);
  auto loss = [&] { return ldg::mean(ldg::square(net.forward(pre, post))); };

  CHECK(ldg_test::fd_max_rel_err(pre, loss, ldg_test::sample_coords(pre.numel(), 6, 71)) <
        1e-4);
  CHECK(ldg_test::fd_max_rel_err(post, loss, ldg_test::sample_coords(post.numel(), 6, 72)) <
        1e-4);
  CHECK(ldg_test::fd_max_rel_err(net.encoder.dgms[0].sca.alpha, loss) < 1e-4);
  CHECK(ldg_test::fd_max_rel_err(
            net.encoder.ori.stem.weight, loss,
            ldg_test::sample_coords(net.encoder.ori.stem.weight.numel(), 6, 73)) < 1e-4);
  CHECK(ldg_test::fd_max_rel_err(
            net.decoder.levels[0].vss.scan.A_log, loss,
            ldg_test::sample_coords(net.decoder.levels[0].vss.scan.A_log.numel(), 6, 74)) <
        1e-4);
  CHECK(ldg_test::fd_max_rel_err(net.decoder.head.weight, loss,
                                 ldg_test::sample_coords(net.decoder.head.weight.numel(), 6,
                                                         75)) < 1e-4);
}

TEST_CASE("paper-scale configuration lands in the published cost class") {
  ldg::LDGNet<float> net(ModelConfig::full());
  std::int64_t params = ldg::param_count(net.collect());
  std::int64_t flops = net.flops(256, 256);
  CAPTURE(params);
  CAPTURE(flops);
  CHECK(params >= 2000000);
  CHECK(params <= 6000000);
  CHECK(flops >= 500000000);
  CHECK(flops <= 3000000000LL);
}

TEST_CASE("translation consistency at level-4 stride granularity") {
  // wraparound-shift both inputs by one level-4 cell (32 px); outputs should
  // shift accordingly on an interior window, up to border/seam effects.
  // The convolutional encoder is near-exactly equivariant; the directional
  // scans in the decoder leak seam context, so the full-model bound is an
  // empirical ratio (measured 0.16 on this seed; asserted with margin).
  ldg::LDGNet<double> net(ModelConfig::tiny());
  // batch-stat normalization: a wraparound shift permutes pixels, so the
  // per-channel statistics (and thus the normalization) match exactly
  net.set_training(true);
  std::int64_t Hw = 256, shift = 32;
  T pre = ldg_test::random_tensor({1, 3, Hw, Hw}, 707, 0.0, 1.0, false);
  T post = ldg_test::random_tensor({1, 3, Hw, Hw}, 708, 0.0, 1.0, false);
  auto roll = [&](const T& x) {
    std::vector<double> d(static_cast<std::size_t>(x.numel()));
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t h = 0; h < Hw; ++h)
        for (std::int64_t w = 0; w < Hw; ++w)
          d[static_cast<std::size_t>((c * Hw + h) * Hw + (w + shift) % Hw)] =
              x.data()[(c * Hw + h) * Hw + w];
    return T::from_data({1, 3, Hw, Hw}, std::move(d));
  };
  ldg::NoGradGuard ng;
  // encoder level 1 (stride 4, shift = 8 cells): the conv/attention chain is
  // exactly equivariant away from the image border in eval mode (train-mode
  // batch statistics pick up the seam's border pixels)
  {
    net.set_training(false);
    T a = net.encoder.encode(pre, post).pre_mod[0];
    T b = net.encoder.encode(roll(pre), roll(post)).pre_mod[0];
    std::int64_t Hs = a.shape()[2], C = a.shape()[1], sh = shift / 4;
    double worst = 0.0, mag = 0.0;
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t h = 8; h < Hs - 8; ++h)
        for (std::int64_t w = 8; w < Hs - 8 - sh; ++w) {
          worst = std::max(worst, std::abs(a.data()[(c * Hs + h) * Hs + w] -
                                           b.data()[(c * Hs + h) * Hs + w + sh]));
          mag = std::max(mag, std::abs(a.data()[(c * Hs + h) * Hs + w]));
        }
    CHECK(worst <= 1e-12 * mag);
    net.set_training(true);
  }
  T base = net.forward(pre, post);
  T shifted = net.forward(roll(pre), roll(post));
  // full model: central window, well away from both image border and seam
  double worst = 0.0, scale = 0.0;
  for (std::int64_t cls = 0; cls < 2; ++cls)
    for (std::int64_t h = 96; h < 160; ++h)
      for (std::int64_t w = 96; w < 160; ++w) {
        double v = base.data()[(cls * Hw + h) * Hw + w];
        double s = shifted.data()[(cls * Hw + h) * Hw + (w + shift) % Hw];
        worst = std::max(worst, std::abs(v - s));
        scale = std::max(scale, std::abs(v));
      }
  CAPTURE(worst);
  CAPTURE(scale);
  CHECK(worst < 0.25 * scale);
}
