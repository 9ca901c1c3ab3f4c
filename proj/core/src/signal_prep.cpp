#include "scatterbench/signal_prep.hpp"

#include <algorithm>
#include <cmath>

#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench::prep {

namespace {

Image2D log_ratio(const Image2D& signal, const Image2D& flat, double floor, const char* what) {
  require_same_shape(signal, flat, what);
  if (!(floor > 0.0)) throw InvalidArgument(std::string(what) + ": floor must be > 0");
  Image2D out(signal.height(), signal.width());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double f = flat.pixels()[i];
    if (!(f > 0.0)) throw InvalidArgument(std::string(what) + ": flat field must be > 0 everywhere");
    const double s = signal.pixels()[i];
    out.pixels()[i] = static_cast<float>(-std::log(std::max(s, floor * f) / f));
  }
  return out;
}

}  // namespace

LinearizedProjection linearize(const Image2D& intensity, const Image2D& flat, const FomSize& fom, double floor) {
  return {log_ratio(intensity, flat, floor, "linearize"), fom};
}

NormalizedScatter normalize_scatter(const Image2D& scatter, const Image2D& flat, const FomSize& fom, double floor) {
  for (float v : scatter.pixels()) {
    if (v < 0.0f) throw InvalidArgument("normalize_scatter: negative scatter");
  }
  return {log_ratio(scatter, flat, floor, "normalize_scatter"), fom};
}

CorrectionResult correct(const LinearizedProjection& corrupt, const NormalizedScatter& predicted, double eps,
                         SubtractionDomain domain) {
  require_same_shape(corrupt.data, predicted.data, "correct");
  if (!(eps > 0.0)) throw InvalidArgument("correct: eps must be > 0");
  CorrectionResult res{{Image2D(corrupt.data.height(), corrupt.data.width()), corrupt.fom}, 0};
  for (std::size_t i = 0; i < corrupt.data.size(); ++i) {
    const double p = corrupt.data.pixels()[i];
    const double scatter_ratio = std::exp(-static_cast<double>(predicted.data.pixels()[i]));
    double out = 0.0;
    if (domain == SubtractionDomain::Intensity) {
      double residual = std::exp(-p) - scatter_ratio;
      if (residual < eps) {
        residual = eps;
        ++res.clamped_pixels;
      }
      out = -std::log(residual);
    } else {
      out = p - scatter_ratio;
    }
    res.projection.data.pixels()[i] = static_cast<float>(out);
  }
  return res;
}

Image2D to_intensity(const Image2D& linearized, const Image2D& flat) {
  require_same_shape(linearized, flat, "to_intensity");
  Image2D out(linearized.height(), linearized.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.pixels()[i] = static_cast<float>(flat.pixels()[i] * std::exp(-static_cast<double>(linearized.pixels()[i])));
  }
  return out;
}

}  // namespace scatterbench::prep
