#pragma once

// Cost profiler: exact parameter counts, closed-form FLOPs, and the
// allocator high-water mark over one forward pass.

#include "ldg/model.hpp"

namespace ldg {

struct CostReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t peak_bytes = 0;
};

template <class S>
CostReport profile_model(const ModelConfig& cfg, std::int64_t input_size) {
  LDGNet<S> net(cfg);
  net.set_training(false);
  CostReport r;
  r.params = param_count(net.collect());
  r.flops = net.flops(input_size, input_size);
  MemTracker::reset_peak();
  {
    NoGradGuard ng;
    Tensor<S> pre = Tensor<S>::zeros({1, 3, input_size, input_size});
    Tensor<S> post = Tensor<S>::zeros({1, 3, input_size, input_size});
    net.forward(pre, post);
  }
  r.peak_bytes = MemTracker::peak().load();
  return r;
}

}  // namespace ldg
