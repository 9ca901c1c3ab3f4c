#include "scatterbench/nn/adam.hpp"

#include <cmath>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench::nn {

void Adam::step(std::vector<ParamRef> params, double lr) {
  if (t_ == 0 && m_.empty()) {
    for (const ParamRef& p : params) {
      if (p.value.size() != p.grad.size()) throw InvalidArgument("adam: value and gradient sizes differ");
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (params.size() != m_.size()) {
    throw InvalidArgument("adam: expected " + std::to_string(m_.size()) + " parameter tensors, got " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.size() != m_[i].size() || params[i].grad.size() != m_[i].size()) {
      throw InvalidArgument("adam: parameter " + std::to_string(i) + " changed shape");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    const ParamRef& p = params[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value[j] = static_cast<float>(p.value[j] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void Adam::reset() noexcept {
  t_ = 0;
  m_.clear();
  v_.clear();
}

}  // namespace scatterbench::nn
