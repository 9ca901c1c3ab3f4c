#include "scatterbench/metrics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench::metrics {

namespace {

void require_same_size(std::span<const float> a, std::span<const float> b, const char* what) {
  if (a.size() != b.size()) {
    throw InvalidArgument(std::string(what) + ": size mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
}

bool in_image(const Image2D& img, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= static_cast<double>(img.width()) - 1.0 &&
         y <= static_cast<double>(img.height()) - 1.0;
}

// Sum and count of pixels within `radius` of (cx, cy).
void roi_accumulate(const Image2D& img, double cx, double cy, double radius, double& sum, std::size_t& count) {
  if (!in_image(img, cx - radius, cy - radius) || !in_image(img, cx + radius, cy + radius)) {
    throw InvalidArgument("uniformity: ROI centred at (" + std::to_string(cx) + ", " + std::to_string(cy) +
                          ") leaves the image");
  }
  const auto r0 = static_cast<std::size_t>(std::ceil(cy - radius));
  const auto r1 = static_cast<std::size_t>(std::floor(cy + radius));
  const auto c0 = static_cast<std::size_t>(std::ceil(cx - radius));
  const auto c1 = static_cast<std::size_t>(std::floor(cx + radius));
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) {
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      if (dx * dx + dy * dy <= radius * radius) {
        sum += img(r, c);
        ++count;
      }
    }
  }
}

double bilinear(const Image2D& img, double x, double y) {
  const auto c0 = static_cast<std::size_t>(std::floor(x));
  const auto r0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t c1 = std::min(c0 + 1, img.width() - 1);
  const std::size_t r1 = std::min(r0 + 1, img.height() - 1);
  const double fx = x - static_cast<double>(c0);
  const double fy = y - static_cast<double>(r0);
  const double top = (1.0 - fx) * img(r0, c0) + fx * img(r0, c1);
  const double bottom = (1.0 - fx) * img(r1, c0) + fx * img(r1, c1);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace

double mape(std::span<const float> pred, std::span<const float> truth, MapeMode mode, double floor) {
  require_same_size(pred, truth, "mape");
  if (truth.empty()) throw InvalidArgument("mape: empty input");
  if (mode == MapeMode::SumNormalized) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      num += std::abs(static_cast<double>(pred[i]) - truth[i]);
      den += truth[i];
    }
    if (den == 0.0) throw InvalidArgument("mape: truth sums to zero");
    return 100.0 * num / den;
  }
  if (!(floor > 0.0)) throw InvalidArgument("mape: floor must be > 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(static_cast<double>(pred[i]) - truth[i]) / std::max(static_cast<double>(truth[i]), floor);
  }
  return 100.0 * acc / static_cast<double>(pred.size());
}

double mape(const prep::NormalizedScatter& pred, const prep::NormalizedScatter& truth, MapeMode mode, double floor) {
  require_same_shape(pred.data, truth.data, "mape");
  return mape(pred.data.pixels(), truth.data.pixels(), mode, floor);
}

double mse(std::span<const float> pred, std::span<const float> truth, std::span<const std::uint8_t> mask) {
  require_same_size(pred, truth, "mse");
  if (!mask.empty() && mask.size() != pred.size()) throw InvalidArgument("mse: mask size mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double d = static_cast<double>(pred[i]) - truth[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw InvalidArgument("mse: empty mask");
  return acc / static_cast<double>(n);
}

double rmse(std::span<const float> pred, std::span<const float> truth, std::span<const std::uint8_t> mask) {
  return std::sqrt(mse(pred, truth, mask));
}

double mse(const Image2D& pred, const Image2D& truth, std::span<const std::uint8_t> mask) {
  require_same_shape(pred, truth, "mse");
  return mse(pred.pixels(), truth.pixels(), mask);
}

double rmse(const Image2D& pred, const Image2D& truth, std::span<const std::uint8_t> mask) {
  return std::sqrt(mse(pred, truth, mask));
}

void RoiSpec::validate() const {
  if (!(radius > 0.0)) throw InvalidArgument("RoiSpec: radius must be > 0");
  if (!(phantom_radius > 0.0)) throw InvalidArgument("RoiSpec: phantom_radius must be > 0");
  if (!(ring_radius_frac > 0.0 && ring_radius_frac < 1.0)) {
    throw InvalidArgument("RoiSpec: ring_radius_frac must lie in (0, 1)");
  }
  if (n_periphery < 1) throw InvalidArgument("RoiSpec: n_periphery must be >= 1");
}

double uniformity(const Image2D& slice, const RoiSpec& roi) {
  roi.validate();
  double csum = 0.0;
  std::size_t cn = 0;
  roi_accumulate(slice, roi.center_x, roi.center_y, roi.radius, csum, cn);
  double psum = 0.0;
  std::size_t pn = 0;
  const double ring = roi.ring_radius_frac * roi.phantom_radius;
  for (int k = 0; k < roi.n_periphery; ++k) {
    const double a = 2.0 * std::numbers::pi * k / roi.n_periphery;
    roi_accumulate(slice, roi.center_x + ring * std::cos(a), roi.center_y + ring * std::sin(a), roi.radius, psum, pn);
  }
  if (cn == 0 || pn == 0) throw InvalidArgument("uniformity: ROI contains no pixel centres");
  return std::abs(csum / static_cast<double>(cn) - psum / static_cast<double>(pn));
}

std::vector<ProfilePoint> line_profile(const Image2D& slice, double x0, double y0, double x1, double y1,
                                       int n_samples, double pixel_mm) {
  if (slice.empty()) throw InvalidArgument("line_profile: empty slice");
  if (n_samples < 1) throw InvalidArgument("line_profile: n_samples must be >= 1");
  if (!in_image(slice, x0, y0) || !in_image(slice, x1, y1)) {
    throw InvalidArgument("line_profile: endpoint outside the slice");
  }
  std::vector<ProfilePoint> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  const double length = std::hypot(x1 - x0, y1 - y0);
  for (int i = 0; i < n_samples; ++i) {
    const double t = n_samples == 1 ? 0.0 : static_cast<double>(i) / (n_samples - 1);
    out.push_back({t * length * pixel_mm, bilinear(slice, x0 + t * (x1 - x0), y0 + t * (y1 - y0))});
  }
  return out;
}

}  // namespace scatterbench::metrics
