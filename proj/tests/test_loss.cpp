#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "ldg/loss.hpp"

using ldg::Tensor;
using T = Tensor<double>;

namespace {

T make_target(const std::vector<double>& v, std::int64_t n, std::int64_t h, std::int64_t w) {
  return T::from_data({n, h, w}, v);
}

// hard +-20 logits from a prediction mask (softmax probs exactly 0/1 in
// double precision)
T hard_logits(const std::vector<int>& pred, std::int64_t h, std::int64_t w) {
  std::vector<double> z(2 * pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    z[i] = pred[i] ? -20.0 : 20.0;               // class-0 score
    z[pred.size() + i] = pred[i] ? 20.0 : -20.0; // class-1 score
  }
  return T::from_data({1, 2, h, w}, std::move(z), true);
}

double mean_jaccard_loss(const std::vector<int>& pred, const std::vector<int>& tgt) {
  double acc = 0;
  int present = 0;
  for (int c = 0; c < 2; ++c) {
    bool has = false;
    for (int t : tgt) has = has || (t == c);
    if (!has) continue;
    ++present;
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      bool p = pred[i] == c, g = tgt[i] == c;
      inter += p && g;
      uni += p || g;
    }
    acc += 1.0 - inter / uni;
  }
  return acc / present;
}

}  // namespace

TEST_CASE("cross entropy on uniform logits is ln 2") {
  T logits = T::zeros({2, 2, 3, 3});
  T tgt = make_target(std::vector<double>(18, 1.0), 2, 3, 3);
  CHECK(ldg::cross_entropy(logits, tgt).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy vanishes for confident correct predictions") {
  T logits = hard_logits({1, 0, 1, 0}, 2, 2);
  T tgt = make_target({1, 0, 1, 0}, 1, 2, 2);
  CHECK(ldg::cross_entropy(logits, tgt).item() < 1e-8);
}

TEST_CASE("cross entropy matches per-pixel hand computation") {
  // logits [1,2,2,2] laid out class-major
  std::vector<double> z = {0.3, -1.2, 0.8, 2.0, -0.5, 0.7, 0.1, -0.4};
  std::vector<double> t = {1, 0, 0, 1};
  T logits = T::from_data({1, 2, 2, 2}, z);
  T tgt = make_target(t, 1, 2, 2);
  double want = 0;
  for (int i = 0; i < 4; ++i) {
    double z0 = z[static_cast<std::size_t>(i)], z1 = z[static_cast<std::size_t>(4 + i)];
    double zt = t[static_cast<std::size_t>(i)] == 1 ? z1 : z0;
    double m = std::max(z0, z1);
    want += m + std::log(std::exp(z0 - m) + std::exp(z1 - m)) - zt;
  }
  want /= 4;
  CHECK(ldg::cross_entropy(logits, tgt).item() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("cross entropy rejects non-binary targets") {
  T logits = T::zeros({1, 2, 2, 2});
  CHECK_THROWS_AS(ldg::cross_entropy(logits, make_target({0, 1, 2, 0}, 1, 2, 2)),
                  ldg::ContractError);
  CHECK_THROWS_AS(ldg::cross_entropy(logits, make_target({0, 1, 0.5, 0}, 1, 2, 2)),
                  ldg::ContractError);
}

TEST_CASE("cross entropy gradient sums to zero over the class axis") {
  T logits = ldg_test::random_tensor({1, 2, 3, 3}, 801);
  T tgt = make_target({1, 0, 1, 0, 0, 1, 1, 0, 0}, 1, 3, 3);
  ldg::cross_entropy(logits, tgt).backward();
  for (std::int64_t i = 0; i < 9; ++i)
    CHECK(std::abs(logits.grad()[i] + logits.grad()[9 + i]) < 1e-14);
  auto loss = [&] { return ldg::cross_entropy(logits, tgt); };
  CHECK(ldg_test::fd_max_rel_err(logits, loss) < 1e-4);
}

TEST_CASE("lovasz is zero on perfect hard predictions") {
  T logits = hard_logits({1, 0, 0, 1, 1, 1}, 2, 3);
  T tgt = make_target({1, 0, 0, 1, 1, 1}, 1, 2, 3);
  CHECK(std::abs(ldg::lovasz_softmax(logits, tgt).item()) < 1e-12);
}

TEST_CASE("lovasz equals mean per-class 1-IoU on every hard vertex, n <= 8") {
  for (int n = 1; n <= 8; ++n) {
    for (int tm = 0; tm < (1 << n); ++tm) {
      std::vector<int> tgt(static_cast<std::size_t>(n));
      std::vector<double> tgtd(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) tgt[static_cast<std::size_t>(i)] = (tm >> i) & 1;
      for (int i = 0; i < n; ++i) tgtd[static_cast<std::size_t>(i)] = tgt[static_cast<std::size_t>(i)];
      for (int pm = 0; pm < (1 << n); ++pm) {
        std::vector<int> pred(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pred[static_cast<std::size_t>(i)] = (pm >> i) & 1;
        T logits = hard_logits(pred, 1, n);
        T t = make_target(tgtd, 1, 1, n);
        double got = ldg::lovasz_softmax(logits, t).item();
        double want = mean_jaccard_loss(pred, tgt);
        REQUIRE(std::abs(got - want) < 1e-12);
      }
    }
  }
}

TEST_CASE("lovasz is non-increasing as a correct-class logit improves") {
  ldg::Rng rng(802);
  for (int trial = 0; trial < 20; ++trial) {
    std::int64_t n = 12;
    std::vector<double> z(static_cast<std::size_t>(2 * n));
    std::vector<double> t(static_cast<std::size_t>(n));
    for (auto& v : z) v = rng.uniform(-2, 2);
    for (auto& v : t) v = rng.uniform_int(0, 1);
    std::int64_t pick = rng.uniform_int(0, n - 1);
    double prev = 1e300;
    for (double bump = 0; bump < 6.0; bump += 0.5) {
      std::vector<double> zb = z;
      std::size_t cls = t[static_cast<std::size_t>(pick)] == 1 ? 1 : 0;
      zb[cls * static_cast<std::size_t>(n) + static_cast<std::size_t>(pick)] += bump;
      double v = ldg::lovasz_softmax(T::from_data({1, 2, 1, n}, zb),
                                     make_target(t, 1, 1, n))
                     .item();
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("lovasz tie-handling gives deterministic gradients") {
  std::vector<double> z = {0.5, 0.5, -0.5, 0.5, -0.5, 0.5, 0.5, -0.5};
  T tgt = make_target({1, 0, 0, 1}, 1, 2, 2);
  auto run = [&](std::vector<double>& g) {
    T logits = T::from_data({1, 2, 2, 2}, z, true);
    ldg::lovasz_softmax(logits, tgt).backward();
    g.assign(logits.grad(), logits.grad() + 8);
  };
  std::vector<double> g1, g2;
  run(g1);
  run(g2);
  CHECK(g1 == g2);
}

TEST_CASE("lovasz gradient vs finite differences") {
  T logits = ldg_test::random_tensor({1, 2, 3, 4}, 803);
  T tgt = make_target({1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0}, 1, 3, 4);
  // finite-difference probing can cross sort boundaries; keep h small
  CHECK(ldg_test::fd_max_rel_err(logits, [&] { return ldg::lovasz_softmax(logits, tgt); },
                                 {}, 1e-6) < 1e-4);
}

TEST_CASE("total loss is the exact sum of its parts") {
  T logits = ldg_test::random_tensor({2, 2, 3, 3}, 804);
  std::vector<double> t(18);
  ldg::Rng rng(805);
  for (auto& v : t) v = rng.uniform_int(0, 1);
  T tgt = make_target(t, 2, 3, 3);
  double want = ldg::cross_entropy(logits, tgt).item() +
                ldg::lovasz_softmax(logits, tgt).item();
  CHECK(ldg::total_loss(logits, tgt).item() == want);
  CHECK(ldg_test::fd_max_rel_err(logits, [&] { return ldg::total_loss(logits, tgt); }, {},
                                 1e-6) < 1e-4);
  // perfect prediction: 0 + 0
  T perfect = hard_logits({1, 0, 0, 1}, 2, 2);
  CHECK(std::abs(ldg::total_loss(perfect, make_target({1, 0, 0, 1}, 1, 2, 2)).item()) < 1e-8);
}

TEST_CASE("metrics hand example") {
  ldg::Metrics m = ldg::metrics({.tp = 3, .fp = 1, .fn = 1, .tn = 5});
  CHECK(m.pre == doctest::Approx(0.75));
  CHECK(m.rec == doctest::Approx(0.75));
  CHECK(m.f1 == doctest::Approx(0.75));
  CHECK(m.iou == doctest::Approx(0.6));
  CHECK(m.oa == doctest::Approx(0.8));
}

TEST_CASE("metrics conventions and contracts") {
  ldg::Metrics perfect = ldg::metrics({.tp = 7, .fp = 0, .fn = 0, .tn = 3});
  CHECK(perfect.rec == 1.0);
  CHECK(perfect.pre == 1.0);
  CHECK(perfect.oa == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.iou == 1.0);

  // all-negative image predicted all-negative
  ldg::Metrics clean = ldg::metrics({.tp = 0, .fp = 0, .fn = 0, .tn = 10});
  CHECK(clean.f1 == 1.0);
  CHECK(clean.iou == 1.0);
  CHECK(clean.oa == 1.0);
  CHECK(clean.rec == 0.0);  // zero denominator convention

  ldg::Metrics miss = ldg::metrics({.tp = 0, .fp = 0, .fn = 5, .tn = 5});
  CHECK(miss.f1 == 0.0);
  CHECK(miss.iou == 0.0);

  CHECK_THROWS_AS(ldg::metrics({.tp = -1, .fp = 0, .fn = 0, .tn = 0}), ldg::ContractError);
}

TEST_CASE("F1 = 2 IoU / (1 + IoU) for arbitrary counts") {
  ldg::Rng rng(806);
  for (int i = 0; i < 100; ++i) {
    ldg::ConfusionCounts c{rng.uniform_int(0, 50), rng.uniform_int(0, 50),
                           rng.uniform_int(0, 50), rng.uniform_int(0, 50)};
    ldg::Metrics m = ldg::metrics(c);
    CHECK(m.f1 == doctest::Approx(2.0 * m.iou / (1.0 + m.iou)).epsilon(1e-12));
  }
}

TEST_CASE("published precision/recall reproduce the published F1 and IoU") {
  double pre = 0.9602, rec = 0.9056;
  double f1 = 2.0 * pre * rec / (pre + rec);
  double iou = f1 / (2.0 - f1);
  CHECK(std::abs(100.0 * f1 - 93.21) < 0.03);
  CHECK(std::abs(100.0 * iou - 87.28) < 0.03);
}

TEST_CASE("confusion accumulation from argmax predictions") {
  T logits = hard_logits({1, 0, 1, 0, 1, 1}, 2, 3);
  T tgt = make_target({1, 0, 0, 0, 0, 1}, 1, 2, 3);
  ldg::ConfusionCounts c;
  ldg::accumulate_confusion(c, logits, tgt);
  CHECK(c.tp == 2);
  CHECK(c.fp == 2);
  CHECK(c.fn == 0);
  CHECK(c.tn == 2);
}
