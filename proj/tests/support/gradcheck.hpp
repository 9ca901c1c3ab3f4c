#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>
#include <vector>

#include "scatterbench/nn/net.hpp"

namespace scatterbench::testing {

inline nn::Tensor4 random_tensor(nn::Shape4 s, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  nn::Tensor4 t(s);
  for (float& v : t.values()) v = u(rng);
  return t;
}

// Keeps values away from the LeakyReLU kink so central differences stay on one branch.
inline void push_off_zero(nn::Tensor4& t, float gap) {
  for (float& v : t.values()) {
    if (std::abs(v) < gap) v = v < 0.0f ? v - gap : v + gap;
  }
}

struct GradCheck {
  double worst_input = 0.0;
  double worst_param = 0.0;
};

// Norm-wise relative error between analytic and central-difference gradients of
// L = sum(w * net(x)), accumulated in double.
inline GradCheck check_gradients_at(nn::Net& net, nn::Tensor4 x, const nn::Tensor4& w, double step) {
  auto weighted = [&](const nn::Tensor4& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y.values()[i]) * w.values()[i];
    return s;
  };
  auto rel = [](const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - b[i]) * (a[i] - b[i]);
      da += a[i] * a[i];
      db += b[i] * b[i];
    }
    const double den = std::max(std::sqrt(da), std::sqrt(db));
    return den == 0.0 ? 0.0 : std::sqrt(num) / den;
  };
  net.zero_grad();
  net.forward(x, nn::Mode::Train);
  const nn::Tensor4 dx = net.backward(w);
  auto loss = [&] { return weighted(net.forward(x, nn::Mode::Train)); };

  GradCheck res;
  std::vector<double> analytic;
  std::vector<double> numeric;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = x.values()[i];
    x.values()[i] = static_cast<float>(keep + step);
    const double lp = loss();
    x.values()[i] = static_cast<float>(keep - step);
    const double lm = loss();
    x.values()[i] = keep;
    numeric.push_back((lp - lm) / (2.0 * step));
    analytic.push_back(dx.values()[i]);
  }
  res.worst_input = rel(analytic, numeric);

  analytic.clear();
  numeric.clear();
  for (nn::ParamRef p : net.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float keep = p.value[i];
      p.value[i] = static_cast<float>(keep + step);
      const double lp = loss();
      p.value[i] = static_cast<float>(keep - step);
      const double lm = loss();
      p.value[i] = keep;
      numeric.push_back((lp - lm) / (2.0 * step));
      analytic.push_back(p.grad[i]);
    }
  }
  res.worst_param = rel(analytic, numeric);
  net.clear_cache();
  return res;
}

// Float32 forwards limit any single step: small steps drown in rounding, large ones
// cross kinks. The best of a few steps bounds the analytic gradient's error.
inline GradCheck check_gradients(nn::Net& net, const nn::Tensor4& x, std::mt19937& rng, double step) {
  const nn::Tensor4 w = random_tensor(net.output_shape(x.shape()), rng);
  GradCheck best{1e30, 1e30};
  for (double h : {step, step / 4.0, step * 4.0}) {
    const GradCheck g = check_gradients_at(net, x, w, h);
    best.worst_input = std::min(best.worst_input, g.worst_input);
    best.worst_param = std::min(best.worst_param, g.worst_param);
  }
  return best;
}

inline void randomize_bn(nn::Net& net, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(0.5f, 1.5f);
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (std::holds_alternative<nn::BatchNorm>(net.node(i).layer)) {
      for (float& v : net.state(i).weight) v = u(rng);
      for (float& v : net.state(i).bias) v = u(rng) - 1.0f;
    }
  }
}

enum class GradLayer { Conv2d, BatchNorm, LeakyReLU, MaxPool2, BilinearUp2, BilinearUpToSize, Concat };

inline constexpr GradLayer kAllGradLayers[] = {GradLayer::Conv2d,      GradLayer::BatchNorm,
                                               GradLayer::LeakyReLU,   GradLayer::MaxPool2,
                                               GradLayer::BilinearUp2, GradLayer::BilinearUpToSize,
                                               GradLayer::Concat};

inline std::string_view name(GradLayer l) {
  switch (l) {
    case GradLayer::Conv2d: return "conv2d";
    case GradLayer::BatchNorm: return "batchnorm";
    case GradLayer::LeakyReLU: return "leaky_relu";
    case GradLayer::MaxPool2: return "maxpool2";
    case GradLayer::BilinearUp2: return "bilinear_up2";
    case GradLayer::BilinearUpToSize: return "bilinear_up_to_size";
    case GradLayer::Concat: return "concat";
  }
  return "?";
}

// One randomized gradient check of a single layer kind; trial t varies the shape.
inline GradCheck layer_trial(GradLayer kind, int t, std::mt19937& rng) {
  std::uniform_int_distribution<int> dim(3, 8);
  std::uniform_int_distribution<int> ch(1, 4);
  const auto sz = [](int v) { return static_cast<std::size_t>(v); };
  const std::size_t n = sz(1 + t % 2);
  switch (kind) {
    case GradLayer::Conv2d: {
      const int k = 1 + t % 3;
      const nn::Conv2d cv{k, k, ch(rng), ch(rng), 1 + (t % 4 == 3), k / 2, t % 2 == 0};
      nn::Net net(cv.c_in);
      net.add(cv);
      net.init_weights(static_cast<std::uint64_t>(t));
      return check_gradients(net, random_tensor({n, sz(cv.c_in), sz(dim(rng)), sz(dim(rng))}, rng), rng, 1e-1);
    }
    case GradLayer::BatchNorm: {
      const int c = ch(rng);
      nn::Net net(c);
      net.add(nn::BatchNorm{c});
      net.init_weights(1);
      randomize_bn(net, rng);
      return check_gradients(net, random_tensor({n + 1, sz(c), sz(dim(rng)), sz(dim(rng))}, rng, -2.0f, 2.0f), rng,
                             2e-3);
    }
    case GradLayer::LeakyReLU: {
      nn::Net net(1);
      net.add(nn::LeakyReLU{0.01f + 0.1f * static_cast<float>(t % 3)});
      nn::Tensor4 x = random_tensor({n, 1, sz(dim(rng)), sz(dim(rng))}, rng);
      push_off_zero(x, 0.05f);
      return check_gradients(net, x, rng, 1e-2);
    }
    case GradLayer::MaxPool2: {
      nn::Net net(2);
      net.add(nn::MaxPool2{});
      // Distinct values spaced well beyond the step keep each argmax fixed.
      nn::Tensor4 x({n, 2, sz(dim(rng)), sz(dim(rng))});
      std::vector<float> vals(x.size());
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1f * static_cast<float>(i);
      std::shuffle(vals.begin(), vals.end(), rng);
      std::copy(vals.begin(), vals.end(), x.values().begin());
      return check_gradients(net, x, rng, 1e-2);
    }
    case GradLayer::BilinearUp2: {
      nn::Net net(2);
      net.add(nn::BilinearUp2{});
      return check_gradients(net, random_tensor({n, 2, sz(dim(rng)), sz(dim(rng))}, rng), rng, 1e-1);
    }
    case GradLayer::BilinearUpToSize: {
      nn::Net net(1);
      const int c = net.add(nn::Conv2d{3, 3, 1, 2, 2, 1, true});
      net.add(nn::BilinearUp2{}, {c, nn::kNetInput});
      net.init_weights(static_cast<std::uint64_t>(t));
      return check_gradients(net, random_tensor({n, 1, sz(dim(rng) + 1), sz(dim(rng) + 1)}, rng), rng, 1e-1);
    }
    case GradLayer::Concat: {
      nn::Net net(2);
      const int a = net.add(nn::Conv2d{3, 3, 2, 3, 1, 1, true});
      const int b = net.add(nn::Conv2d{1, 1, 2, 1, 1, 0, false}, {nn::kNetInput});
      net.add(nn::Concat{}, {a, b});
      net.init_weights(static_cast<std::uint64_t>(t));
      return check_gradients(net, random_tensor({n, 2, sz(dim(rng)), sz(dim(rng))}, rng), rng, 1e-1);
    }
  }
  return {};
}

}  // namespace scatterbench::testing
