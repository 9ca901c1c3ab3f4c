#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "scatterbench/geometry.hpp"
#include "scatterbench/image.hpp"

namespace scatterbench::sim {

/// Monochromatic linear attenuation coefficients (1/mm) at a 60 keV effective energy.
namespace materials {
inline constexpr double kAir = 0.0;
inline constexpr double kWater = 0.0206;
inline constexpr double kPmma = 0.0229;
inline constexpr double kLdpe = 0.0172;
inline constexpr double kDelrin = 0.0275;
inline constexpr double kPtfe = 0.0397;
inline constexpr double kAluminium = 0.0750;
}  // namespace materials

struct VoxelGrid {
  int nx = 64;
  int ny = 64;
  int nz = 64;
  double voxel_mm = 2.0;

  void validate() const;
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  // Centre coordinate (mm) of voxel index i along an axis with n voxels.
  double centre_mm(int i, int n) const { return (i - 0.5 * (n - 1)) * voxel_mm; }
  double half_extent_mm(int n) const { return 0.5 * n * voxel_mm; }
};

/// z-major voxel volume of attenuation coefficients; index = (z * ny + y) * nx + x.
struct VoxelPhantom {
  VoxelGrid grid;
  std::vector<float> mu;

  float at(int x, int y, int z) const {
    return mu[(static_cast<std::size_t>(z) * grid.ny + y) * grid.nx + x];
  }
};

/// Cylinder parallel to z. A non-positive height extends over the whole grid.
struct Cylinder {
  double cx_mm = 0.0;
  double cy_mm = 0.0;
  double radius_mm = 0.0;
  double height_mm = 0.0;
  double mu = materials::kWater;
};

struct Ellipsoid {
  double cx_mm = 0.0;
  double cy_mm = 0.0;
  double cz_mm = 0.0;
  double ax_mm = 0.0;
  double ay_mm = 0.0;
  double az_mm = 0.0;
  double mu = materials::kWater;
};

using Shape = std::variant<Cylinder, Ellipsoid>;

/// Shapes painted in order; later shapes overwrite earlier ones. Empty = all air.
struct PhantomSpec {
  std::vector<Shape> shapes;
};

struct Insert {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double radius_mm = 0.0;
  double mu = 0.0;
};

PhantomSpec water_cylinder(double radius_mm);
PhantomSpec cylinder_with_inserts(double body_radius_mm, double body_mu, const std::vector<Insert>& inserts);
/// PMMA body with air, LDPE, Delrin, PTFE and aluminium rods on a ring.
PhantomSpec sedentex_like(double body_radius_mm = 55.0);

VoxelPhantom build_phantom(const PhantomSpec& spec, const VoxelGrid& grid);

/// Primary/scatter/flat intensities (photons per pixel) for every view of one FOM.
struct ProjectionSet {
  ScanGeometry geometry;
  FomSize fom;
  std::vector<Image2D> primary;
  std::vector<Image2D> scatter;
  Image2D flat;
};

/// Line integral of mu along the ray from `source` to `target` (mm coordinates),
/// sampled at <= voxel/2 steps with trilinear lookup.
double line_integral(const VoxelPhantom& ph, const double source[3], const double target[3]);

/// Source position and the detector pixel position for one ray.
struct Ray {
  double source[3];
  double target[3];
};
Ray detector_ray(const ScanGeometry& geom, const DetectorWindow& win, int view, double row, double col);

/// Beer-Lambert primary i0 * exp(-line integral) on the FOM's active detector window.
ProjectionSet forward_project(const VoxelPhantom& ph, const ScanGeometry& geom, const FomSize& fom, double i0);

/// Low-frequency scatter stand-in: amp * G_sigma * (flat - primary) with
/// sigma = sigma_frac * width pixels and clamp-to-edge borders.
Image2D scatter_surrogate(const Image2D& primary, const Image2D& flat, double amp, double sigma_frac);

/// Independent Poisson draw per pixel with the pixel value as mean.
Image2D add_poisson_noise(const Image2D& img, std::uint64_t seed);

/// Mean of `realizations` independent Poisson images, drawn as Poisson(k * mean) / k.
Image2D averaged_poisson_noise(const Image2D& img, int realizations, std::uint64_t seed);

/// Fraction of total spectral energy (DC included) whose radial frequency exceeds
/// `cutoff` in cycles/pixel. Half the Nyquist frequency is 0.25.
double high_frequency_energy_fraction(const Image2D& img, double cutoff = 0.25);

}  // namespace scatterbench::sim
