#include "scatterbench/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench {

void FomSize::validate() const {
  auto in_range = [](double v) { return v > 0.0 && v <= 200.0; };
  if (!in_range(diameter_mm) || !in_range(height_mm)) {
    throw InvalidArgument("FOM " + std::to_string(diameter_mm) + "x" + std::to_string(height_mm) +
                          " mm outside (0, 200]");
  }
}

void ScanGeometry::validate() const {
  if (!(source_isocenter_mm > 0.0)) throw InvalidArgument("geometry: source-isocenter must be > 0");
  if (!(source_detector_mm > source_isocenter_mm)) {
    throw InvalidArgument("geometry: source-detector distance must exceed source-isocenter");
  }
  if (n_views < 1) throw InvalidArgument("geometry: n_views must be >= 1");
  if (!(angular_range_deg > 0.0)) throw InvalidArgument("geometry: angular range must be > 0");
  if (detector_rows < 1 || detector_cols < 1) throw InvalidArgument("geometry: empty detector");
  if (!(pixel_pitch_mm > 0.0)) throw InvalidArgument("geometry: pixel pitch must be > 0");
}

bool ScanGeometry::full_scan() const { return angular_range_deg >= 360.0; }

double ScanGeometry::angular_step_rad() const {
  if (full_scan()) return 2.0 * std::numbers::pi / n_views;
  if (n_views == 1) return 0.0;
  return angular_range_deg * std::numbers::pi / 180.0 / (n_views - 1);
}

double ScanGeometry::view_angle_rad(int view) const { return view * angular_step_rad(); }

std::uint64_t ScanGeometry::hash() const {
  // FNV-1a over the little-endian bytes of every field.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t bits) {
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(std::bit_cast<std::uint64_t>(source_isocenter_mm));
  mix(std::bit_cast<std::uint64_t>(source_detector_mm));
  mix(static_cast<std::uint64_t>(n_views));
  mix(std::bit_cast<std::uint64_t>(angular_range_deg));
  mix(static_cast<std::uint64_t>(detector_rows));
  mix(static_cast<std::uint64_t>(detector_cols));
  mix(std::bit_cast<std::uint64_t>(pixel_pitch_mm));
  return h;
}

ScanGeometry ScanGeometry::desk_scale() {
  ScanGeometry g;
  g.pixel_pitch_mm = 1.0;
  return g;
}

DetectorWindow active_area(const ScanGeometry& geom, const FomSize& fom) {
  geom.validate();
  fom.validate();
  const double radius = 0.5 * fom.diameter_mm;
  if (radius >= geom.source_isocenter_mm) throw InvalidArgument("FOM encloses the source");
  // Width: shadow of the cylinder's tangent rays. Height: top/bottom rims at the
  // point nearest to the source, which has the largest magnification.
  const double width_mm =
      2.0 * geom.source_detector_mm * std::tan(std::asin(radius / geom.source_isocenter_mm));
  const double height_mm =
      fom.height_mm * geom.source_detector_mm / (geom.source_isocenter_mm - radius);
  DetectorWindow w;
  w.cols = static_cast<int>(std::lround(width_mm / geom.pixel_pitch_mm));
  w.rows = static_cast<int>(std::lround(height_mm / geom.pixel_pitch_mm));
  w.cols = std::clamp(w.cols, 1, geom.detector_cols);
  w.rows = std::clamp(w.rows, 1, geom.detector_rows);
  return w;
}

double detector_u_mm(const ScanGeometry& geom, const DetectorWindow& win, double col) {
  return (col - 0.5 * (win.cols - 1)) * geom.pixel_pitch_mm;
}

double detector_v_mm(const ScanGeometry& geom, const DetectorWindow& win, double row) {
  return (0.5 * (win.rows - 1) - row) * geom.pixel_pitch_mm;
}

}  // namespace scatterbench
