#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scatterbench/geometry.hpp"
#include "scatterbench/image.hpp"
#include "scatterbench/sim.hpp"

namespace scatterbench::sim {

inline constexpr std::uint32_t kScb1Version = 1;

/// One training pair: linearized corrupt projection, flat-normalized scatter target
/// and the flat field, tagged with its FOM and the geometry that produced it.
struct ScatterSample {
  Image2D input;
  Image2D target;
  Image2D flat;
  FomSize fom;
  std::uint64_t geometry_hash = 0;

  friend bool operator==(const ScatterSample&, const ScatterSample&) = default;
};

void write_scb1(std::ostream& os, const ScatterSample& sample);
ScatterSample read_scb1(std::istream& is);
void write_scb1(const std::filesystem::path& path, const ScatterSample& sample);
ScatterSample read_scb1(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  FomSize fom;
  int noise_level = 1;
  int view_index = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr const char* kManifestName = "manifest.csv";

/// Writes `<path>,<fom_d>,<fom_h>,<noise_level>,<view_index>` lines via a temporary
/// file that is renamed into place, so a failed run never leaves a partial manifest.
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct SimulationConfig {
  double i0 = 2500.0;  // photons per pixel per realization
  double scatter_amp = 0.4;
  double sigma_frac = 0.25;
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

/// Primary + flat by ray tracing, then the scatter surrogate for every view.
ProjectionSet simulate_projections(const VoxelPhantom& phantom, const ScanGeometry& geom, const FomSize& fom,
                                   const SimulationConfig& cfg);

/// Builds one training pair. The input averages `noise_level` Poisson realizations of
/// primary + scatter; the target is the noiseless scatter.
ScatterSample make_sample(const ProjectionSet& set, int view, int noise_level, std::uint64_t seed, double floor);

/// Deterministic per-sample seed derived from the base seed and the sample's indices.
std::uint64_t sample_seed(std::uint64_t base, int phantom, int fom, int view, int noise_level);

/// Writes one SCB1 file per (phantom, FOM, view, noise level) plus the manifest and a
/// `detector_sizes.csv` sidecar (fom_d,fom_h,rows,cols). Returns the manifest entries.
std::vector<ManifestEntry> generate_dataset(std::span<const VoxelPhantom> phantoms, const ScanGeometry& geom,
                                            std::span<const FomSize> fom_grid, int noise_levels,
                                            const std::filesystem::path& out_dir, const SimulationConfig& cfg);

/// Reads every sample listed in a manifest.
std::vector<ScatterSample> load_dataset(const std::filesystem::path& manifest_path);

std::string format_number(double v);

}  // namespace scatterbench::sim
