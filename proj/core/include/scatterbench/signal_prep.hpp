#pragma once

#include <cstddef>

#include "scatterbench/geometry.hpp"
#include "scatterbench/image.hpp"

namespace scatterbench::prep {

inline constexpr double kDefaultFloor = 1e-6;
inline constexpr double kDefaultEps = 1e-6;

/// -log((I + S) / F): the network input.
struct LinearizedProjection {
  Image2D data;
  FomSize fom;
};

/// -log(S / F): the network target. Large values mean little scatter.
struct NormalizedScatter {
  Image2D data;
  FomSize fom;
};

/// out = -log(max(intensity, floor * flat) / flat).
LinearizedProjection linearize(const Image2D& intensity, const Image2D& flat, const FomSize& fom,
                               double floor = kDefaultFloor);

NormalizedScatter normalize_scatter(const Image2D& scatter, const Image2D& flat, const FomSize& fom,
                                    double floor = kDefaultFloor);

enum class SubtractionDomain {
  // exp(-P) - exp(-S_hat), then relinearize.
  Intensity,
  // P - exp(-S_hat): subtracts the scatter-to-flat ratio from the log signal.
  LogDomain,
};

struct CorrectionResult {
  LinearizedProjection projection;
  std::size_t clamped_pixels = 0;
};

/// Removes predicted scatter from a corrupt projection. Residual intensities
/// below eps are clamped to eps and counted.
CorrectionResult correct(const LinearizedProjection& corrupt, const NormalizedScatter& predicted,
                         double eps = kDefaultEps, SubtractionDomain domain = SubtractionDomain::Intensity);

/// Inverse of linearize on the unclamped range: flat * exp(-P).
Image2D to_intensity(const Image2D& linearized, const Image2D& flat);

}  // namespace scatterbench::prep
