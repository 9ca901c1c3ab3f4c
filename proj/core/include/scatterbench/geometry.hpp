#pragma once

#include <cstdint>

namespace scatterbench {

/// Field of measurement: the imaged cylinder, diameter x height in mm.
struct FomSize {
  double diameter_mm = 0.0;
  double height_mm = 0.0;

  void validate() const;
  friend bool operator==(const FomSize&, const FomSize&) = default;
};

/// Circular cone-beam trajectory about the z axis with a flat panel detector.
struct ScanGeometry {
  double source_isocenter_mm = 500.0;
  double source_detector_mm = 700.0;
  int n_views = 60;
  double angular_range_deg = 210.0;
  int detector_rows = 320;
  int detector_cols = 256;
  double pixel_pitch_mm = 0.278;

  void validate() const;

  // Ranges of 360 degrees or more are sampled as a full circle (k * 2pi / n),
  // shorter arcs include both end points (k * range / (n - 1)).
  bool full_scan() const;
  double view_angle_rad(int view) const;
  double angular_step_rad() const;

  std::uint64_t hash() const;

  // 1 mm pixels so that every FOM of the appendix grids fits a 320 x 256 panel.
  static ScanGeometry desk_scale();

  friend bool operator==(const ScanGeometry&, const ScanGeometry&) = default;
};

/// Rows/cols of the detector region that sees the whole FOM cylinder.
struct DetectorWindow {
  int rows = 0;
  int cols = 0;
};

DetectorWindow active_area(const ScanGeometry& geom, const FomSize& fom);

/// Detector-plane coordinates (mm) of a pixel in a centred window.
double detector_u_mm(const ScanGeometry& geom, const DetectorWindow& win, double col);
double detector_v_mm(const ScanGeometry& geom, const DetectorWindow& win, double row);

}  // namespace scatterbench
