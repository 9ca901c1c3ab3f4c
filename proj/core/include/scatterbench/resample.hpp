#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scatterbench/image.hpp"

namespace scatterbench::resample {

enum class Kind : std::uint8_t { Nearest, Area, Bilinear, Bicubic };

struct Method {
  Kind kind = Kind::Bicubic;
  // Widens the kernel by the downsampling factor. Only Bilinear and Bicubic honour it.
  bool antialias = false;

  friend bool operator==(const Method&, const Method&) = default;
};

std::string_view to_string(Kind kind);
std::string to_string(Method method);
// Accepts "nearest", "area", "bilinear", "bicubic" with an optional "+aa" suffix.
Method parse_method(std::string_view text);

/// Keys cubic convolution kernel with a = -0.5.
double keys_cubic(double x);

/// Sparse 1D interpolation matrix: output sample `o` is
/// sum over k in [begin[o], begin[o+1]) of weight[k] * input[index[k]].
struct AxisWeights {
  std::vector<std::size_t> begin;
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

/// Pixel centres are aligned (output centre o maps to (o + 0.5) * in / out - 0.5)
/// and out-of-range taps are clamped to the edge.
AxisWeights axis_weights(std::size_t in, std::size_t out, Method method);

Image2D resize(const Image2D& img, std::size_t out_h, std::size_t out_w, Method method);

/// MSE between `img` and its downsample-then-upsample reconstruction, where the
/// intermediate shape is ceil(h / factor) x ceil(w / factor).
double roundtrip_mse(const Image2D& img, int factor, Method method);

struct StudyRow {
  Method method;
  int factor = 1;
  double mean_mse = 0.0;
};

/// One row per (method, factor) in method-major order, averaged over the corpus.
std::vector<StudyRow> study_interpolation(std::span<const Image2D> corpus,
                                          std::span<const int> factors,
                                          std::span<const Method> methods);

}  // namespace scatterbench::resample
