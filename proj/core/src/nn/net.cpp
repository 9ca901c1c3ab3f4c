#include "scatterbench/nn/net.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>

#include "scatterbench/errors.hpp"
#include "scatterbench/resample.hpp"

namespace scatterbench::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::size_t conv_extent(std::size_t in, int k, int stride, int pad) {
  const auto padded = static_cast<std::ptrdiff_t>(in) + 2 * pad;
  if (padded < k) return 0;
  return static_cast<std::size_t>((padded - k) / stride + 1);
}

[[noreturn]] void shape_error(std::size_t node, const Layer& layer, const std::string& msg) {
  throw InvalidArgument("layer " + std::to_string(node) + " (" + layer_name(layer) + "): " + msg);
}

// ---- convolution -----------------------------------------------------------

void im2col(const float* x, std::size_t cin, std::size_t h, std::size_t w, const Conv2d& cv, std::size_t oh,
            std::size_t ow, float* col) {
  const std::size_t p = oh * ow;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const float* src = x + ci * h * w;
    for (int ky = 0; ky < cv.kh; ++ky) {
      for (int kx = 0; kx < cv.kw; ++kx) {
        float* dst = col + ((ci * cv.kh + ky) * cv.kw + kx) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * cv.stride - cv.pad + ky;
          float* drow = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(drow, drow + ow, 0.0f);
            continue;
          }
          const float* srow = src + iy * w;
          if (cv.stride == 1) {
            const std::ptrdiff_t off = kx - cv.pad;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow),
                                                               static_cast<std::ptrdiff_t>(w) - off);
            if (hi <= lo) {
              std::fill(drow, drow + ow, 0.0f);
              continue;
            }
            std::fill(drow, drow + lo, 0.0f);
            std::memcpy(drow + lo, srow + lo + off, sizeof(float) * static_cast<std::size_t>(hi - lo));
            std::fill(drow + hi, drow + ow, 0.0f);
          } else {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * cv.stride - cv.pad + kx;
              drow[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) ? srow[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, std::size_t cin, std::size_t h, std::size_t w, const Conv2d& cv, std::size_t oh,
            std::size_t ow, float* dx) {
  const std::size_t p = oh * ow;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    float* dst = dx + ci * h * w;
    for (int ky = 0; ky < cv.kh; ++ky) {
      for (int kx = 0; kx < cv.kw; ++kx) {
        const float* src = col + ((ci * cv.kh + ky) * cv.kw + kx) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * cv.stride - cv.pad + ky;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          float* drow = dst + iy * w;
          const float* srow = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * cv.stride - cv.pad + kx;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Conv2d& cv) { return cv.kh == 1 && cv.kw == 1 && cv.stride == 1 && cv.pad == 0; }

Tensor4 conv_forward(const Conv2d& cv, const NodeState& st, const Tensor4& x) {
  const std::size_t oh = conv_extent(x.h(), cv.kh, cv.stride, cv.pad);
  const std::size_t ow = conv_extent(x.w(), cv.kw, cv.stride, cv.pad);
  const std::size_t p = oh * ow;
  const std::size_t k = static_cast<std::size_t>(cv.c_in) * cv.kh * cv.kw;
  Tensor4 y({x.n(), static_cast<std::size_t>(cv.c_out), oh, ow});
  CMapMat wmat(st.weight.data(), cv.c_out, static_cast<Eigen::Index>(k));
  Buffer col(is_pointwise(cv) ? 0 : k * p);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const float* src = x.plane(n, 0);
    if (!is_pointwise(cv)) {
      im2col(src, cv.c_in, x.h(), x.w(), cv, oh, ow, col.data());
      src = col.data();
    }
    MapMat out(y.plane(n, 0), cv.c_out, static_cast<Eigen::Index>(p));
    out.noalias() = wmat * CMapMat(src, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
    if (cv.bias) {
      for (int co = 0; co < cv.c_out; ++co) out.row(co).array() += st.bias[co];
    }
  }
  return y;
}

Tensor4 conv_backward(const Conv2d& cv, NodeState& st, const Tensor4& x, const Tensor4& dy) {
  const std::size_t oh = dy.h();
  const std::size_t ow = dy.w();
  const std::size_t p = oh * ow;
  const std::size_t k = static_cast<std::size_t>(cv.c_in) * cv.kh * cv.kw;
  Tensor4 dx(x.shape());
  CMapMat wmat(st.weight.data(), cv.c_out, static_cast<Eigen::Index>(k));
  MapMat gw(st.grad_weight.data(), cv.c_out, static_cast<Eigen::Index>(k));
  const bool pointwise = is_pointwise(cv);
  Buffer col(pointwise ? 0 : k * p);
  Buffer dcol(pointwise ? 0 : k * p);
  for (std::size_t n = 0; n < x.n(); ++n) {
    CMapMat g(dy.plane(n, 0), cv.c_out, static_cast<Eigen::Index>(p));
    const float* src = x.plane(n, 0);
    if (!pointwise) {
      im2col(src, cv.c_in, x.h(), x.w(), cv, oh, ow, col.data());
      src = col.data();
    }
    gw.noalias() += g * CMapMat(src, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)).transpose();
    if (cv.bias) {
      for (int co = 0; co < cv.c_out; ++co) {
        double acc = 0.0;
        const float* row = dy.plane(n, co);
        for (std::size_t i = 0; i < p; ++i) acc += row[i];
        st.grad_bias[co] += static_cast<float>(acc);
      }
    }
    if (pointwise) {
      MapMat(dx.plane(n, 0), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)).noalias() =
          wmat.transpose() * g;
    } else {
      MapMat(dcol.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)).noalias() =
          wmat.transpose() * g;
      col2im(dcol.data(), cv.c_in, x.h(), x.w(), cv, oh, ow, dx.plane(n, 0));
    }
  }
  return dx;
}

// ---- batch normalisation ---------------------------------------------------

Tensor4 bn_forward_train(const BatchNorm& bn, NodeState& st, const Tensor4& x, std::vector<double>& mean,
                         std::vector<double>& inv_std) {
  const std::size_t c = x.c();
  const std::size_t plane = x.shape().plane();
  const double m = static_cast<double>(x.n() * plane);
  mean.assign(c, 0.0);
  inv_std.assign(c, 0.0);
  Tensor4 y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mu = sum / m;
    double sq = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        sq += d * d;
      }
    }
    const double var = sq / m;
    const double is = 1.0 / std::sqrt(var + bn.eps);
    mean[ch] = mu;
    inv_std[ch] = is;
    const double scale = st.weight[ch] * is;
    const double shift = st.bias[ch] - mu * scale;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      float* q = y.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) q[i] = static_cast<float>(p[i] * scale + shift);
    }
    const double unbiased = m > 1.0 ? sq / (m - 1.0) : var;
    st.running_mean[ch] = static_cast<float>((1.0 - bn.momentum) * st.running_mean[ch] + bn.momentum * mu);
    st.running_var[ch] = static_cast<float>((1.0 - bn.momentum) * st.running_var[ch] + bn.momentum * unbiased);
  }
  return y;
}

Tensor4 bn_forward_eval(const BatchNorm& bn, const NodeState& st, const Tensor4& x) {
  Tensor4 y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (std::size_t ch = 0; ch < x.c(); ++ch) {
    const float scale = st.weight[ch] / std::sqrt(st.running_var[ch] + bn.eps);
    const float shift = st.bias[ch] - st.running_mean[ch] * scale;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      float* q = y.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
    }
  }
  return y;
}

Tensor4 bn_backward(NodeState& st, const Tensor4& x, const std::vector<double>& mean,
                    const std::vector<double>& inv_std, const Tensor4& dy) {
  Tensor4 dx(x.shape());
  const std::size_t plane = x.shape().plane();
  const double m = static_cast<double>(x.n() * plane);
  for (std::size_t ch = 0; ch < x.c(); ++ch) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      const float* g = dy.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * (p[i] - mean[ch]) * inv_std[ch];
      }
    }
    st.grad_weight[ch] += static_cast<float>(sum_dy_xhat);
    st.grad_bias[ch] += static_cast<float>(sum_dy);
    const double k = st.weight[ch] * inv_std[ch] / m;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const float* p = x.plane(n, ch);
      const float* g = dy.plane(n, ch);
      float* d = dx.plane(n, ch);
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (p[i] - mean[ch]) * inv_std[ch];
        d[i] = static_cast<float>(k * (m * g[i] - sum_dy - xhat * sum_dy_xhat));
      }
    }
  }
  return dx;
}

// ---- pointwise / pooling / resampling --------------------------------------

Tensor4 lrelu_forward(const LeakyReLU& lr, const Tensor4& x) {
  Tensor4 y(x.shape());
  const float* p = x.data();
  float* q = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = p[i] > 0.0f ? p[i] : lr.slope * p[i];
  return y;
}

Tensor4 lrelu_backward(const LeakyReLU& lr, const Tensor4& x, const Tensor4& dy) {
  Tensor4 dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx.data()[i] = x.data()[i] > 0.0f ? dy.data()[i] : lr.slope * dy.data()[i];
  return dx;
}

Tensor4 pool_forward(const Tensor4& x, std::vector<std::uint32_t>* argmax) {
  const std::size_t oh = x.h() / 2;
  const std::size_t ow = x.w() / 2;
  Tensor4 y({x.n(), x.c(), oh, ow});
  if (argmax) argmax->resize(y.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const float* p = x.plane(n, c);
      float* q = y.plane(n, c);
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * oy * x.w() + 2 * ox);
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::uint32_t>((2 * oy + dy) * x.w() + 2 * ox + dx);
              if (p[idx] > p[best]) best = idx;
            }
          }
          q[oy * ow + ox] = p[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return y;
}

Tensor4 pool_backward(const Shape4& xs, const std::vector<std::uint32_t>& argmax, const Tensor4& dy) {
  Tensor4 dx(xs);
  std::size_t o = 0;
  for (std::size_t n = 0; n < dy.n(); ++n) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      float* d = dx.plane(n, c);
      const float* g = dy.plane(n, c);
      for (std::size_t i = 0; i < dy.shape().plane(); ++i, ++o) d[argmax[o]] += g[i];
    }
  }
  return dx;
}

const resample::Method kBilinear{resample::Kind::Bilinear, false};

Tensor4 up_forward(const Tensor4& x, std::size_t oh, std::size_t ow) {
  const auto wy = resample::axis_weights(x.h(), oh, kBilinear);
  const auto wx = resample::axis_weights(x.w(), ow, kBilinear);
  Tensor4 y({x.n(), x.c(), oh, ow});
  std::vector<double> tmp(x.h() * ow);
  std::vector<double> acc(ow);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const float* p = x.plane(n, c);
      for (std::size_t r = 0; r < x.h(); ++r) {
        for (std::size_t o = 0; o < ow; ++o) {
          double a = 0.0;
          for (std::size_t k = wx.begin[o]; k < wx.begin[o + 1]; ++k) a += wx.weight[k] * p[r * x.w() + wx.index[k]];
          tmp[r * ow + o] = a;
        }
      }
      float* q = y.plane(n, c);
      for (std::size_t o = 0; o < oh; ++o) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = wy.begin[o]; k < wy.begin[o + 1]; ++k) {
          const double* src = tmp.data() + wy.index[k] * ow;
          for (std::size_t i = 0; i < ow; ++i) acc[i] += wy.weight[k] * src[i];
        }
        for (std::size_t i = 0; i < ow; ++i) q[o * ow + i] = static_cast<float>(acc[i]);
      }
    }
  }
  return y;
}

Tensor4 up_backward(const Shape4& xs, const Tensor4& dy) {
  const std::size_t oh = dy.h();
  const std::size_t ow = dy.w();
  const auto wy = resample::axis_weights(xs.h, oh, kBilinear);
  const auto wx = resample::axis_weights(xs.w, ow, kBilinear);
  Tensor4 dx(xs);
  std::vector<double> tmp(xs.h * ow);
  for (std::size_t n = 0; n < dy.n(); ++n) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      std::fill(tmp.begin(), tmp.end(), 0.0);
      const float* g = dy.plane(n, c);
      for (std::size_t o = 0; o < oh; ++o) {
        for (std::size_t k = wy.begin[o]; k < wy.begin[o + 1]; ++k) {
          double* dst = tmp.data() + wy.index[k] * ow;
          for (std::size_t i = 0; i < ow; ++i) dst[i] += wy.weight[k] * g[o * ow + i];
        }
      }
      float* d = dx.plane(n, c);
      for (std::size_t r = 0; r < xs.h; ++r) {
        for (std::size_t o = 0; o < ow; ++o) {
          const double v = tmp[r * ow + o];
          for (std::size_t k = wx.begin[o]; k < wx.begin[o + 1]; ++k) {
            d[r * xs.w + wx.index[k]] += static_cast<float>(wx.weight[k] * v);
          }
        }
      }
    }
  }
  return dx;
}

Tensor4 concat_forward(const Tensor4& a, const Tensor4& b) {
  Tensor4 y({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t plane = a.shape().plane();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::memcpy(y.plane(n, 0), a.plane(n, 0), sizeof(float) * a.c() * plane);
    std::memcpy(y.plane(n, a.c()), b.plane(n, 0), sizeof(float) * b.c() * plane);
  }
  return y;
}

std::pair<Tensor4, Tensor4> concat_backward(const Shape4& as, const Shape4& bs, const Tensor4& dy) {
  Tensor4 da(as);
  Tensor4 db(bs);
  const std::size_t plane = as.plane();
  for (std::size_t n = 0; n < dy.n(); ++n) {
    std::memcpy(da.plane(n, 0), dy.plane(n, 0), sizeof(float) * as.c * plane);
    std::memcpy(db.plane(n, 0), dy.plane(n, as.c), sizeof(float) * bs.c * plane);
  }
  return {std::move(da), std::move(db)};
}

void accumulate(Tensor4& dst, Tensor4&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2d& c) {
                          return "conv" + std::to_string(c.kh) + "x" + std::to_string(c.kw) + "(" +
                                 std::to_string(c.c_in) + "->" + std::to_string(c.c_out) + ")";
                        },
                        [](const BatchNorm& b) { return "batchnorm(" + std::to_string(b.channels) + ")"; },
                        [](const LeakyReLU&) { return std::string("leaky_relu"); },
                        [](const MaxPool2&) { return std::string("maxpool2"); },
                        [](const BilinearUp2&) { return std::string("bilinear_up"); },
                        [](const Concat&) { return std::string("concat"); },
                    },
                    layer);
}

int Net::add(Layer layer, std::vector<int> inputs) {
  const int id = static_cast<int>(nodes_.size());
  if (inputs.empty()) inputs.push_back(id - 1);
  for (int in : inputs) {
    if (in < kNetInput || in >= id) throw InvalidArgument("Net::add: input index out of range");
  }
  const bool binary = std::holds_alternative<Concat>(layer);
  const bool up = std::holds_alternative<BilinearUp2>(layer);
  if (binary && inputs.size() != 2) throw InvalidArgument("Net::add: concat takes two inputs");
  if (up && inputs.size() > 2) throw InvalidArgument("Net::add: upsampling takes one or two inputs");
  if (!binary && !up && inputs.size() != 1) throw InvalidArgument("Net::add: layer takes one input");

  NodeState st;
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    if (c->kh < 1 || c->kw < 1 || c->c_in < 1 || c->c_out < 1 || c->stride < 1 || c->pad < 0) {
      throw InvalidArgument("Net::add: invalid convolution parameters");
    }
    const std::size_t n = static_cast<std::size_t>(c->c_out) * c->c_in * c->kh * c->kw;
    st.weight.assign(n, 0.0f);
    st.grad_weight.assign(n, 0.0f);
    if (c->bias) {
      st.bias.assign(c->c_out, 0.0f);
      st.grad_bias.assign(c->c_out, 0.0f);
    }
  } else if (const auto* b = std::get_if<BatchNorm>(&layer)) {
    if (b->channels < 1) throw InvalidArgument("Net::add: invalid batchnorm channels");
    st.weight.assign(b->channels, 1.0f);
    st.bias.assign(b->channels, 0.0f);
    st.grad_weight.assign(b->channels, 0.0f);
    st.grad_bias.assign(b->channels, 0.0f);
    st.running_mean.assign(b->channels, 0.0f);
    st.running_var.assign(b->channels, 1.0f);
  }
  nodes_.push_back({std::move(layer), std::move(inputs)});
  states_.push_back(std::move(st));
  cache_ = {};
  return id;
}

void Net::init_weights(std::uint64_t seed, float leaky_slope) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    NodeState& st = states_[i];
    if (const auto* c = std::get_if<Conv2d>(&nodes_[i].layer)) {
      const double fan_in = static_cast<double>(c->c_in) * c->kh * c->kw;
      const double bound = std::sqrt(6.0 / ((1.0 + static_cast<double>(leaky_slope) * leaky_slope) * fan_in));
      std::uniform_real_distribution<float> dist(static_cast<float>(-bound), static_cast<float>(bound));
      for (float& w : st.weight) w = dist(rng);
      std::fill(st.bias.begin(), st.bias.end(), 0.0f);
    } else if (std::holds_alternative<BatchNorm>(nodes_[i].layer)) {
      std::fill(st.weight.begin(), st.weight.end(), 1.0f);
      std::fill(st.bias.begin(), st.bias.end(), 0.0f);
      std::fill(st.running_mean.begin(), st.running_mean.end(), 0.0f);
      std::fill(st.running_var.begin(), st.running_var.end(), 1.0f);
    }
  }
}

std::vector<Shape4> Net::node_shapes(const Shape4& input) const {
  if (input.c != static_cast<std::size_t>(input_channels_)) {
    throw InvalidArgument("network input: expected " + std::to_string(input_channels_) + " channels, got " +
                          std::to_string(input.c));
  }
  std::vector<Shape4> shapes;
  shapes.reserve(nodes_.size());
  auto in_shape = [&](int id) { return id == kNetInput ? input : shapes[id]; };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    const Shape4 x = in_shape(node.inputs[0]);
    Shape4 y = x;
    std::visit(Overloaded{
                   [&](const Conv2d& c) {
                     if (x.c != static_cast<std::size_t>(c.c_in)) {
                       shape_error(i, node.layer, "expected " + std::to_string(c.c_in) + " input channels, got " +
                                                      std::to_string(x.c));
                     }
                     y.c = c.c_out;
                     y.h = conv_extent(x.h, c.kh, c.stride, c.pad);
                     y.w = conv_extent(x.w, c.kw, c.stride, c.pad);
                     if (y.h == 0 || y.w == 0) shape_error(i, node.layer, "input smaller than kernel");
                   },
                   [&](const BatchNorm& b) {
                     if (x.c != static_cast<std::size_t>(b.channels)) {
                       shape_error(i, node.layer, "expected " + std::to_string(b.channels) + " channels, got " +
                                                      std::to_string(x.c));
                     }
                   },
                   [&](const LeakyReLU&) {},
                   [&](const MaxPool2&) {
                     y.h = x.h / 2;
                     y.w = x.w / 2;
                     if (y.h == 0 || y.w == 0) shape_error(i, node.layer, "input " + to_string(x) + " too small to pool");
                   },
                   [&](const BilinearUp2&) {
                     if (node.inputs.size() == 2) {
                       const Shape4 ref = in_shape(node.inputs[1]);
                       y.h = ref.h;
                       y.w = ref.w;
                     } else {
                       y.h = 2 * x.h;
                       y.w = 2 * x.w;
                     }
                   },
                   [&](const Concat&) {
                     const Shape4 b = in_shape(node.inputs[1]);
                     if (b.n != x.n || b.h != x.h || b.w != x.w) {
                       shape_error(i, node.layer, "cannot concatenate " + to_string(x) + " with " + to_string(b));
                     }
                     y.c = x.c + b.c;
                   },
               },
               node.layer);
    shapes.push_back(y);
  }
  return shapes;
}

Shape4 Net::output_shape(const Shape4& input) const {
  if (nodes_.empty()) return input;
  return node_shapes(input).back();
}

const Tensor4& Net::input_of(const Tensor4& x, const std::vector<Tensor4>& outs, int id) const {
  return id == kNetInput ? x : outs[id];
}

Tensor4 Net::forward(const Tensor4& x, Mode mode) {
  const std::vector<Shape4> shapes = node_shapes(x.shape());
  if (nodes_.empty()) return x;
  const bool train = mode == Mode::Train;
  cache_ = {};
  std::vector<Tensor4> outs(nodes_.size());
  std::vector<int> remaining(nodes_.size(), 0);
  for (const Node& node : nodes_) {
    for (int in : node.inputs) {
      if (in != kNetInput) ++remaining[in];
    }
  }
  if (train) {
    cache_.bn_mean.resize(nodes_.size());
    cache_.bn_inv_std.resize(nodes_.size());
    cache_.pool_argmax.resize(nodes_.size());
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    const Tensor4& in = input_of(x, outs, node.inputs[0]);
    NodeState& st = states_[i];
    outs[i] = std::visit(
        Overloaded{
            [&](const Conv2d& c) { return conv_forward(c, st, in); },
            [&](const BatchNorm& b) {
              return train ? bn_forward_train(b, st, in, cache_.bn_mean[i], cache_.bn_inv_std[i])
                           : bn_forward_eval(b, st, in);
            },
            [&](const LeakyReLU& l) { return lrelu_forward(l, in); },
            [&](const MaxPool2&) { return pool_forward(in, train ? &cache_.pool_argmax[i] : nullptr); },
            [&](const BilinearUp2&) { return up_forward(in, shapes[i].h, shapes[i].w); },
            [&](const Concat&) { return concat_forward(in, input_of(x, outs, node.inputs[1])); },
        },
        node.layer);
    if (check_finite_ && !outs[i].all_finite()) {
      throw NumericError("layer " + std::to_string(i) + " (" + layer_name(node.layer) + ") produced non-finite values");
    }
    if (!train) {
      for (int id : node.inputs) {
        if (id != kNetInput && --remaining[id] == 0) outs[id].release();
      }
    }
  }
  Tensor4 result = outs.back();
  if (train) {
    cache_.outputs = std::move(outs);
    cached_input_ = x;
  }
  return result;
}

Tensor4 Net::backward(const Tensor4& grad_out) {
  if (cache_.outputs.empty()) throw StateError("Net::backward: no train-mode forward cached");
  const std::vector<Tensor4>& outs = cache_.outputs;
  if (grad_out.shape() != outs.back().shape()) {
    throw InvalidArgument("Net::backward: gradient shape " + to_string(grad_out.shape()) + " does not match output " +
                          to_string(outs.back().shape()));
  }
  std::vector<Tensor4> grads(nodes_.size());
  Tensor4 grad_in;
  grads.back() = grad_out;
  auto push = [&](int id, Tensor4&& g) {
    if (id == kNetInput) {
      accumulate(grad_in, std::move(g));
    } else {
      accumulate(grads[id], std::move(g));
    }
  };
  for (std::size_t ii = nodes_.size(); ii-- > 0;) {
    if (grads[ii].empty()) continue;
    const Node& node = nodes_[ii];
    const Tensor4& dy = grads[ii];
    const Tensor4& in = input_of(cached_input_, outs, node.inputs[0]);
    NodeState& st = states_[ii];
    std::visit(Overloaded{
                   [&](const Conv2d& c) { push(node.inputs[0], conv_backward(c, st, in, dy)); },
                   [&](const BatchNorm&) {
                     push(node.inputs[0], bn_backward(st, in, cache_.bn_mean[ii], cache_.bn_inv_std[ii], dy));
                   },
                   [&](const LeakyReLU& l) { push(node.inputs[0], lrelu_backward(l, in, dy)); },
                   [&](const MaxPool2&) { push(node.inputs[0], pool_backward(in.shape(), cache_.pool_argmax[ii], dy)); },
                   [&](const BilinearUp2&) { push(node.inputs[0], up_backward(in.shape(), dy)); },
                   [&](const Concat&) {
                     const Tensor4& other = input_of(cached_input_, outs, node.inputs[1]);
                     auto [da, db] = concat_backward(in.shape(), other.shape(), dy);
                     push(node.inputs[0], std::move(da));
                     push(node.inputs[1], std::move(db));
                   },
               },
               node.layer);
    grads[ii].release();
  }
  if (grad_in.empty()) grad_in = Tensor4(cached_input_.shape());
  return grad_in;
}

void Net::zero_grad() {
  for (NodeState& st : states_) {
    std::fill(st.grad_weight.begin(), st.grad_weight.end(), 0.0f);
    std::fill(st.grad_bias.begin(), st.grad_bias.end(), 0.0f);
  }
}

void Net::clear_cache() {
  cache_ = {};
  cached_input_ = {};
}

std::vector<ParamRef> Net::parameters() {
  std::vector<ParamRef> out;
  for (NodeState& st : states_) {
    if (!st.weight.empty()) out.push_back({st.weight, st.grad_weight});
    if (!st.bias.empty()) out.push_back({st.bias, st.grad_bias});
  }
  return out;
}

std::size_t Net::parameter_count() const {
  std::size_t n = 0;
  for (const NodeState& st : states_) n += st.weight.size() + st.bias.size();
  return n;
}

Loss mse_loss(const Tensor4& pred, const Tensor4& target) {
  if (pred.shape() != target.shape()) {
    throw InvalidArgument("mse_loss: shape mismatch " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  Loss loss{0.0, Tensor4(pred.shape())};
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - target.data()[i];
    sum += d * d;
    loss.grad.data()[i] = static_cast<float>(2.0 * d / n);
  }
  loss.value = sum / n;
  return loss;
}

CostReport count_cost(const Net& net, const Shape4& input) {
  CostReport report;
  if (net.empty()) return report;
  const std::vector<Shape4> shapes = net.node_shapes(input);
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Node& node = net.node(i);
    const Shape4& y = shapes[i];
    LayerCost lc{static_cast<int>(i), layer_name(node.layer), 0, 0};
    const auto out_elems = static_cast<std::uint64_t>(y.count());
    std::visit(Overloaded{
                   [&](const Conv2d& c) {
                     const std::uint64_t macs = static_cast<std::uint64_t>(c.kh) * c.kw * c.c_in * c.c_out * y.n *
                                                y.h * y.w;
                     lc.flops = 2 * macs + (c.bias ? out_elems : 0);
                     lc.params = static_cast<std::uint64_t>(c.kh) * c.kw * c.c_in * c.c_out + (c.bias ? c.c_out : 0);
                   },
                   [&](const BatchNorm& b) {
                     lc.flops = kBatchNormFlopsPerElement * out_elems;
                     lc.params = 2ULL * b.channels;
                   },
                   [&](const LeakyReLU&) { lc.flops = kLeakyReluFlopsPerElement * out_elems; },
                   [&](const MaxPool2&) { lc.flops = kMaxPoolFlopsPerOutput * out_elems; },
                   [&](const BilinearUp2&) { lc.flops = kBilinearFlopsPerOutput * out_elems; },
                   [&](const Concat&) {},
               },
               node.layer);
    report.params += lc.params;
    report.flops += lc.flops;
    report.per_layer.push_back(std::move(lc));
  }
  return report;
}

CostReport profile(Net& net, const Tensor4& input) {
  CostReport report = count_cost(net, input.shape());
  AllocationTracker::reset_peak();
  const std::size_t base = AllocationTracker::current_bytes();
  const auto t0 = std::chrono::steady_clock::now();
  Tensor4 out = net.forward(input, Mode::Eval);
  const auto t1 = std::chrono::steady_clock::now();
  report.wall_clock_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  report.peak_alloc_bytes = AllocationTracker::peak_bytes() - base;
  return report;
}

}  // namespace scatterbench::nn
