#pragma once

#include <cstdint>
#include <vector>

#include "scatterbench/nn/net.hpp"

namespace scatterbench::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are sized on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every parameter in place from its gradient; throws InvalidArgument
  /// if the parameter layout differs from earlier steps.
  void step(std::vector<ParamRef> params, double lr);

  std::uint64_t steps() const noexcept { return t_; }
  void reset() noexcept;

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace scatterbench::nn
