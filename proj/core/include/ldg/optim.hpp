#pragma once

// AdamW with decoupled weight decay. A step with any non-finite gradient is
// skipped atomically and counted.

#include <cmath>

#include "ldg/nn.hpp"

namespace ldg {

template <class S>
struct AdamW {
  double lr = 1e-4, wd = 5e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::int64_t skipped = 0;
  std::vector<Tensor<S>> params;
  std::vector<std::vector<double>> m, v;  // 64-bit moments regardless of S

  AdamW() = default;
  explicit AdamW(const ParamList<S>& list, double lr_ = 1e-4, double wd_ = 5e-4)
      : lr(lr_), wd(wd_) {
    for (const auto& p : list)
      if (p.is_param && p.tensor.requires_grad()) params.push_back(p.tensor);
    for (const auto& p : params) {
      m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
      v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  // returns false if the step was skipped due to a non-finite gradient
  bool step() {
    for (auto& p : params) {
      const S* g = p.grad();
      for (std::int64_t i = 0; i < p.numel(); ++i)
        if (!std::isfinite(static_cast<double>(g[i]))) {
          ++skipped;
          return false;
        }
    }
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<S>& p = params[k];
      S* w = p.data();
      const S* g = p.grad();
      for (std::int64_t i = 0; i < p.numel(); ++i) {
        double wi = static_cast<double>(w[i]) * (1.0 - lr * wd);  // decoupled decay
        double gi = static_cast<double>(g[i]);
        auto ui = static_cast<std::size_t>(i);
        m[k][ui] = beta1 * m[k][ui] + (1.0 - beta1) * gi;
        v[k][ui] = beta2 * v[k][ui] + (1.0 - beta2) * gi * gi;
        double mhat = m[k][ui] / bc1, vhat = v[k][ui] / bc2;
        w[i] = static_cast<S>(wi - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
    return true;
  }
};

}  // namespace ldg
