#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "scatterbench/geometry.hpp"
#include "scatterbench/image.hpp"
#include "scatterbench/signal_prep.hpp"
#include "scatterbench/sim.hpp"

namespace scatterbench::fdk {

enum class Unit : std::uint8_t { Mu = 0, Hu = 1 };

/// z-major volume, index = (z * ny + y) * nx + x, centred on the isocentre.
struct Volume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  float voxel_mm = 1.0f;
  Unit unit = Unit::Mu;
  std::vector<float> values;

  float at(int x, int y, int z) const {
    return values[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  bool all_finite() const noexcept;
  friend bool operator==(const Volume&, const Volume&) = default;
};

struct FdkOptions {
  // Raised-cosine window on the ramp filter.
  bool apodize = false;
};

/// Cosine weighting, Ram-Lak ramp filtering along detector rows, and voxel-driven
/// backprojection with bilinear detector interpolation and distance weighting.
/// Arcs shorter than 360 degrees are Parker weighted. Output in 1/mm.
Volume reconstruct(std::span<const Image2D> projections, const ScanGeometry& geom, const sim::VoxelGrid& grid,
                   const FdkOptions& opts = {});
Volume reconstruct(std::span<const prep::LinearizedProjection> projections, const ScanGeometry& geom,
                   const sim::VoxelGrid& grid, const FdkOptions& opts = {});

/// Parker weight for view angle beta (radians from the arc start) and fan angle gamma.
double parker_weight(double beta, double gamma, double delta);

/// 1000 * (mu - mu_water) / mu_water.
Volume to_hu(const Volume& v, double mu_water);

Image2D axial_slice(const Volume& v, int z);

/// Voxels inside a centred cylinder of the given radius and half height (mm).
std::vector<std::uint8_t> cylinder_mask(const Volume& v, double radius_mm, double half_height_mm);

void write_scv1(std::ostream& os, const Volume& v);
Volume read_scv1(std::istream& is);
void write_scv1(const std::filesystem::path& path, const Volume& v);
Volume read_scv1(const std::filesystem::path& path);

}  // namespace scatterbench::fdk
