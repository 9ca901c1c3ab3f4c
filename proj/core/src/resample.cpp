#include "scatterbench/resample.hpp"

#include <algorithm>
#include <cmath>

#include "scatterbench/errors.hpp"

namespace scatterbench::resample {

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::Nearest: return "nearest";
    case Kind::Area: return "area";
    case Kind::Bilinear: return "bilinear";
    case Kind::Bicubic: return "bicubic";
  }
  return "unknown";
}

std::string to_string(Method method) {
  std::string s(to_string(method.kind));
  if (method.antialias && (method.kind == Kind::Bilinear || method.kind == Kind::Bicubic)) {
    s += "+aa";
  }
  return s;
}

Method parse_method(std::string_view text) {
  Method m;
  constexpr std::string_view kAa = "+aa";
  if (text.size() > kAa.size() && text.substr(text.size() - kAa.size()) == kAa) {
    m.antialias = true;
    text.remove_suffix(kAa.size());
  }
  if (text == "nearest") {
    m.kind = Kind::Nearest;
  } else if (text == "area") {
    m.kind = Kind::Area;
  } else if (text == "bilinear") {
    m.kind = Kind::Bilinear;
  } else if (text == "bicubic") {
    m.kind = Kind::Bicubic;
  } else {
    throw InvalidArgument("unknown resize method '" + std::string(text) + "'");
  }
  return m;
}

double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

double triangle(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

std::size_t clamp_index(std::ptrdiff_t j, std::size_t n) {
  if (j < 0) return 0;
  if (static_cast<std::size_t>(j) >= n) return n - 1;
  return static_cast<std::size_t>(j);
}

void convolution_taps(AxisWeights& w, std::size_t in, std::size_t out, Method method) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const bool cubic = method.kind == Kind::Bicubic;
  const double support = cubic ? 2.0 : 1.0;
  const bool widen = method.antialias && scale > 1.0;
  const double stretch = widen ? scale : 1.0;
  for (std::size_t o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) * scale - 0.5;
    std::ptrdiff_t lo = 0;
    std::ptrdiff_t hi = 0;
    if (widen) {
      lo = static_cast<std::ptrdiff_t>(std::ceil(center - support * stretch));
      hi = static_cast<std::ptrdiff_t>(std::floor(center + support * stretch));
    } else {
      const auto base = static_cast<std::ptrdiff_t>(std::floor(center));
      lo = base - static_cast<std::ptrdiff_t>(support) + 1;
      hi = base + static_cast<std::ptrdiff_t>(support);
    }
    const std::size_t first = w.weight.size();
    double sum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double t = (static_cast<double>(j) - center) / stretch;
      const double k = cubic ? keys_cubic(t) : triangle(t);
      if (k == 0.0) continue;
      w.index.push_back(clamp_index(j, in));
      w.weight.push_back(k);
      sum += k;
    }
    for (std::size_t k = first; k < w.weight.size(); ++k) w.weight[k] /= sum;
    w.begin.push_back(w.weight.size());
  }
}

}  // namespace

AxisWeights axis_weights(std::size_t in, std::size_t out, Method method) {
  if (in == 0 || out == 0) throw InvalidArgument("axis_weights: zero-sized axis");
  AxisWeights w;
  w.begin.reserve(out + 1);
  w.begin.push_back(0);
  switch (method.kind) {
    case Kind::Nearest: {
      const double scale = static_cast<double>(in) / static_cast<double>(out);
      for (std::size_t o = 0; o < out; ++o) {
        const auto src = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) * scale));
        w.index.push_back(std::min(src, in - 1));
        w.weight.push_back(1.0);
        w.begin.push_back(w.weight.size());
      }
      break;
    }
    case Kind::Area: {
      for (std::size_t o = 0; o < out; ++o) {
        const std::size_t start = o * in / out;
        const std::size_t end = ((o + 1) * in + out - 1) / out;
        const double inv = 1.0 / static_cast<double>(end - start);
        for (std::size_t j = start; j < end; ++j) {
          w.index.push_back(j);
          w.weight.push_back(inv);
        }
        w.begin.push_back(w.weight.size());
      }
      break;
    }
    case Kind::Bilinear:
    case Kind::Bicubic:
      convolution_taps(w, in, out, method);
      break;
  }
  return w;
}

Image2D resize(const Image2D& img, std::size_t out_h, std::size_t out_w, Method method) {
  if (out_h == 0 || out_w == 0) throw InvalidArgument("resize: zero-sized target");
  if (img.empty()) throw InvalidArgument("resize: empty input image");
  const std::size_t in_h = img.height();
  const std::size_t in_w = img.width();
  const AxisWeights wx = axis_weights(in_w, out_w, method);
  const AxisWeights wy = axis_weights(in_h, out_h, method);

  // Horizontal pass into a double buffer, then vertical.
  std::vector<double> tmp(in_h * out_w);
  for (std::size_t r = 0; r < in_h; ++r) {
    const float* row = img.pixels().data() + r * in_w;
    double* dst = tmp.data() + r * out_w;
    for (std::size_t o = 0; o < out_w; ++o) {
      double acc = 0.0;
      for (std::size_t k = wx.begin[o]; k < wx.begin[o + 1]; ++k) acc += wx.weight[k] * row[wx.index[k]];
      dst[o] = acc;
    }
  }
  Image2D out(out_h, out_w);
  std::vector<double> acc(out_w);
  for (std::size_t o = 0; o < out_h; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = wy.begin[o]; k < wy.begin[o + 1]; ++k) {
      const double wk = wy.weight[k];
      const double* src = tmp.data() + wy.index[k] * out_w;
      for (std::size_t c = 0; c < out_w; ++c) acc[c] += wk * src[c];
    }
    for (std::size_t c = 0; c < out_w; ++c) out(o, c) = static_cast<float>(acc[c]);
  }
  return out;
}

double roundtrip_mse(const Image2D& img, int factor, Method method) {
  if (factor < 1) throw InvalidArgument("roundtrip_mse: factor must be >= 1");
  if (img.empty()) throw InvalidArgument("roundtrip_mse: empty image");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t dh = (img.height() + f - 1) / f;
  const std::size_t dw = (img.width() + f - 1) / f;
  const Image2D down = resize(img, dh, dw, method);
  const Image2D up = resize(down, img.height(), img.width(), method);
  double sum = 0.0;
  const auto a = img.pixels();
  const auto b = up.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

std::vector<StudyRow> study_interpolation(std::span<const Image2D> corpus,
                                          std::span<const int> factors,
                                          std::span<const Method> methods) {
  if (corpus.empty()) throw InvalidArgument("study_interpolation: empty corpus");
  std::vector<StudyRow> rows;
  rows.reserve(factors.size() * methods.size());
  for (const Method& m : methods) {
    for (int f : factors) {
      double total = 0.0;
      for (const Image2D& img : corpus) total += roundtrip_mse(img, f, m);
      rows.push_back({m, f, total / static_cast<double>(corpus.size())});
    }
  }
  return rows;
}

}  // namespace scatterbench::resample
