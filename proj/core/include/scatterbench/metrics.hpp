#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scatterbench/image.hpp"
#include "scatterbench/signal_prep.hpp"

namespace scatterbench::metrics {

enum class MapeMode {
  // 100 * sum|p - t| / sum t
  SumNormalized,
  // 100 * mean(|p - t| / max(t, floor))
  PerPixel,
};

double mape(std::span<const float> pred, std::span<const float> truth, MapeMode mode = MapeMode::SumNormalized,
            double floor = 1e-3);
double mape(const prep::NormalizedScatter& pred, const prep::NormalizedScatter& truth,
            MapeMode mode = MapeMode::SumNormalized, double floor = 1e-3);

/// Mean squared difference over the pixels where mask is non-zero; an empty mask
/// selects every pixel.
double mse(std::span<const float> pred, std::span<const float> truth, std::span<const std::uint8_t> mask = {});
double rmse(std::span<const float> pred, std::span<const float> truth, std::span<const std::uint8_t> mask = {});
double mse(const Image2D& pred, const Image2D& truth, std::span<const std::uint8_t> mask = {});
double rmse(const Image2D& pred, const Image2D& truth, std::span<const std::uint8_t> mask = {});

/// A central ROI plus n_periphery ROIs centred at equal angles on a ring of radius
/// ring_radius_frac * phantom_radius, all in pixel units. Pixel (r, c) belongs to a
/// ROI when its centre lies within `radius` of the ROI centre.
struct RoiSpec {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 4.0;
  double phantom_radius = 0.0;
  double ring_radius_frac = 0.8;
  int n_periphery = 20;

  void validate() const;
};

/// |mean(central ROI) - mean(all periphery ROI pixels pooled)|.
double uniformity(const Image2D& slice, const RoiSpec& roi);

struct ProfilePoint {
  double distance_mm = 0.0;
  double value = 0.0;
};

/// Bilinear samples at n equally spaced points from (x0, y0) to (x1, y1), where x is
/// the column and y the row, in pixels.
std::vector<ProfilePoint> line_profile(const Image2D& slice, double x0, double y0, double x1, double y1,
                                       int n_samples, double pixel_mm = 1.0);

}  // namespace scatterbench::metrics
