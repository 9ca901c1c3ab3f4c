#include <doctest.h>

#include <cmath>
#include <numbers>

#include "scatterbench/errors.hpp"
#include "scatterbench/sim.hpp"

using namespace scatterbench;
using namespace scatterbench::sim;

namespace {

ScanGeometry small_geometry(int views = 2) {
  ScanGeometry g = ScanGeometry::desk_scale();
  g.n_views = views;
  return g;
}

double mean(const Image2D& img) {
  double s = 0.0;
  for (float v : img.pixels()) s += v;
  return s / img.size();
}

}  // namespace

TEST_CASE("water cylinder voxels") {
  const VoxelGrid grid;
  const VoxelPhantom ph = build_phantom(water_cylinder(50.0), grid);
  REQUIRE(ph.mu.size() == 64u * 64u * 64u);
  for (int z : {0, 31, 63}) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const double r = std::hypot(grid.centre_mm(x, 64), grid.centre_mm(y, 64));
        if (r < 49.0) CHECK(ph.at(x, y, z) == static_cast<float>(materials::kWater));
        if (r > 51.0) CHECK(ph.at(x, y, z) == 0.0f);
      }
    }
  }
}

TEST_CASE("empty phantom spec is all air") {
  const VoxelPhantom ph = build_phantom(PhantomSpec{}, VoxelGrid{16, 16, 16, 2.0});
  for (float v : ph.mu) CHECK(v == 0.0f);
}

TEST_CASE("sedentex-like rods hold their table values") {
  const VoxelGrid grid;
  const double body = 55.0;
  const VoxelPhantom ph = build_phantom(sedentex_like(body), grid);
  const double expected[] = {materials::kAir, materials::kLdpe, materials::kDelrin, materials::kPtfe,
                             materials::kAluminium};
  auto voxel = [&](double mm) { return static_cast<int>(std::lround(mm / grid.voxel_mm + 0.5 * (64 - 1))); };
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 5.0;
    const int x = voxel(0.55 * body * std::cos(a));
    const int y = voxel(0.55 * body * std::sin(a));
    CHECK(ph.at(x, y, 32) == static_cast<float>(expected[i]));
  }
  CHECK(ph.at(32, 32, 32) == static_cast<float>(materials::kPmma));
}

TEST_CASE("shapes outside the grid are rejected") {
  const VoxelGrid grid{32, 32, 32, 2.0};
  CHECK_THROWS_AS(build_phantom(water_cylinder(40.0), grid), InvalidArgument);
  CHECK_THROWS_AS(build_phantom(cylinder_with_inserts(20.0, materials::kPmma, {{30.0, 0.0, 5.0, 0.0}}), grid),
                  InvalidArgument);
  CHECK_THROWS_AS(build_phantom(water_cylinder(10.0), VoxelGrid{0, 4, 4, 1.0}), InvalidArgument);
}

TEST_CASE("empty phantom projects to the flat field") {
  const VoxelPhantom ph = build_phantom(PhantomSpec{}, VoxelGrid{});
  const ProjectionSet set = forward_project(ph, small_geometry(), {120.0, 30.0}, 1000.0);
  REQUIRE(set.primary.size() == 2);
  for (const Image2D& p : set.primary) CHECK(p == set.flat);
  for (float v : set.flat.pixels()) CHECK(v == 1000.0f);
}

TEST_CASE("central rays follow the analytic chord length") {
  const double r = 50.0;
  const double i0 = 1e4;
  const VoxelPhantom ph = build_phantom(water_cylinder(r), VoxelGrid{});
  const ScanGeometry g = small_geometry(3);
  const ProjectionSet set = forward_project(ph, g, {150.0, 60.0}, i0);
  const Image2D& p = set.primary[1];
  const int rows = static_cast<int>(p.height());
  const int cols = static_cast<int>(p.width());
  for (int col : {cols / 2, cols / 2 + 9, cols / 2 - 20}) {
    const int row = rows / 2;
    const double u = (col - 0.5 * (cols - 1)) * g.pixel_pitch_mm;
    const double v = (0.5 * (rows - 1) - row) * g.pixel_pitch_mm;
    const double fan = std::hypot(u, g.source_detector_mm);
    const double d = g.source_isocenter_mm * std::abs(u) / fan;
    const double chord = 2.0 * std::sqrt(r * r - d * d) * std::hypot(fan, v) / fan;
    // Path length recovered from Beer-Lambert, within one voxel of the exact chord.
    const double measured = -std::log(p(row, col) / i0) / materials::kWater;
    CHECK(std::abs(measured - chord) < ph.grid.voxel_mm);
  }
}

TEST_CASE("active detector area scales with the FOM") {
  const ScanGeometry g = small_geometry();
  const DetectorWindow full = active_area(g, {150.0, 100.0});
  const DetectorWindow half = active_area(g, {150.0, 50.0});
  CHECK(std::abs(2 * half.rows - full.rows) <= 1);
  CHECK(half.cols == full.cols);
  // Independent magnification: rims nearest the source project the farthest.
  const double rows = 100.0 * g.source_detector_mm / (g.source_isocenter_mm - 75.0) / g.pixel_pitch_mm;
  CHECK(std::abs(full.rows - rows) <= 0.5);

  DetectorWindow prev{0, 0};
  for (double d : {120.0, 130.0, 150.0, 170.0}) {
    for (double h : {30.0, 90.0, 180.0}) {
      const DetectorWindow w = active_area(g, {d, h});
      CHECK(w.rows <= g.detector_rows);
      CHECK(w.cols <= g.detector_cols);
      if (h == 30.0) {
        CHECK(w.cols >= prev.cols);
        prev = w;
      }
    }
  }
  CHECK(active_area(g, {130.0, 40.0}).rows <= active_area(g, {130.0, 41.0}).rows);
}

TEST_CASE("forward projection error contract") {
  const VoxelPhantom ph = build_phantom(water_cylinder(30.0), VoxelGrid{});
  CHECK_THROWS_AS(forward_project(ph, small_geometry(), {120.0, 30.0}, 0.0), InvalidArgument);
  ScanGeometry inside = small_geometry();
  inside.source_isocenter_mm = 80.0;
  inside.source_detector_mm = 160.0;
  CHECK_THROWS_AS(forward_project(ph, inside, {100.0, 30.0}, 1000.0), InvalidArgument);
}

TEST_CASE("more material never increases the primary") {
  const VoxelGrid grid;
  const ScanGeometry g = small_geometry(3);
  const FomSize fom{130.0, 40.0};
  const ProjectionSet thin = forward_project(build_phantom(water_cylinder(30.0), grid), g, fom, 1000.0);
  const ProjectionSet thick =
      forward_project(build_phantom(cylinder_with_inserts(30.0, materials::kWater, {{5.0, 5.0, 8.0, materials::kPtfe}}), grid),
                      g, fom, 1000.0);
  for (std::size_t v = 0; v < thin.primary.size(); ++v) {
    for (std::size_t i = 0; i < thin.primary[v].size(); ++i) {
      CHECK(thick.primary[v].pixels()[i] <= thin.primary[v].pixels()[i] * (1.0f + 1e-6f));
      CHECK(thin.primary[v].pixels()[i] <= thin.flat.pixels()[i]);
    }
  }
}

TEST_CASE("scatter surrogate trivial cases") {
  const Image2D flat(20, 30, 500.0f);
  const Image2D s0 = scatter_surrogate(flat, flat, 0.4, 0.25);
  for (float v : s0.pixels()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  const Image2D s1 = scatter_surrogate(Image2D(20, 30, 0.0f), flat, 0.4, 0.25);
  for (float v : s1.pixels()) CHECK(v == doctest::Approx(200.0).epsilon(1e-6));
  CHECK_THROWS_AS(scatter_surrogate(Image2D(20, 31), flat, 0.4, 0.25), InvalidArgument);
  CHECK_THROWS_AS(scatter_surrogate(flat, flat, 1.0, 0.25), InvalidArgument);
  CHECK_THROWS_AS(scatter_surrogate(flat, flat, 0.4, 0.0), InvalidArgument);
}

TEST_CASE("scatter surrogate equals a direct 2D convolution") {
  const std::size_t h = 14;
  const std::size_t w = 18;
  const double amp = 0.3;
  const double sigma = 0.2 * w;
  Image2D flat(h, w, 100.0f);
  Image2D primary(h, w, 100.0f);
  // Off-centre absorber.
  for (std::size_t r = 3; r < 7; ++r) {
    for (std::size_t c = 10; c < 15; ++c) primary(r, c) = 20.0f;
  }
  const Image2D s = scatter_surrogate(primary, flat, amp, 0.2);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  double best = -1.0;
  std::size_t br = 0;
  std::size_t bc = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
          const auto rr = std::clamp<long>(static_cast<long>(r) + i, 0, h - 1);
          const auto cc = std::clamp<long>(static_cast<long>(c) + j, 0, w - 1);
          const double k = std::exp(-0.5 * (i * i + j * j) / (sigma * sigma)) / (norm * norm);
          acc += k * (flat(rr, cc) - primary(rr, cc));
        }
      }
      CHECK(s(r, c) == doctest::Approx(amp * acc).epsilon(1e-5));
      if (s(r, c) > best) {
        best = s(r, c);
        br = r;
        bc = c;
      }
    }
  }
  CHECK(std::hypot(br - 4.5, bc - 12.0) <= sigma);
}

TEST_CASE("simulated scatter is low frequency") {
  const VoxelPhantom ph = build_phantom(sedentex_like(55.0), VoxelGrid{});
  const ProjectionSet set = forward_project(ph, small_geometry(2), {150.0, 100.0}, 1000.0);
  for (const Image2D& p : set.primary) {
    const Image2D s = scatter_surrogate(p, set.flat, 0.4, 0.25);
    CHECK(high_frequency_energy_fraction(s, 0.25) < 0.05);
    for (float v : s.pixels()) CHECK(v >= 0.0f);
  }
  // The primary itself has sharp edges.
  CHECK(high_frequency_energy_fraction(set.primary[0], 0.25) > high_frequency_energy_fraction(
                                                                     scatter_surrogate(set.primary[0], set.flat, 0.4, 0.25), 0.25));
}

TEST_CASE("poisson noise moments and determinism") {
  CHECK(add_poisson_noise(Image2D(8, 8, 0.0f), 3) == Image2D(8, 8, 0.0f));
  const Image2D flat(320, 320, 10000.0f);
  const Image2D noisy = add_poisson_noise(flat, 42);
  double m = mean(noisy);
  double var = 0.0;
  for (float v : noisy.pixels()) var += (v - m) * (v - m);
  var /= noisy.size() - 1;
  CHECK(m == doctest::Approx(10000.0).epsilon(0.01));
  CHECK(var == doctest::Approx(10000.0).epsilon(0.10));
  CHECK(add_poisson_noise(flat, 42) == noisy);
  CHECK_FALSE(add_poisson_noise(flat, 43) == noisy);
  Image2D bad(2, 2, 1.0f);
  bad(0, 1) = -1.0f;
  CHECK_THROWS_AS(add_poisson_noise(bad, 1), InvalidArgument);
}

TEST_CASE("averaging realizations divides the variance") {
  const Image2D flat(200, 200, 400.0f);
  const Image2D avg = averaged_poisson_noise(flat, 4, 9);
  const double m = mean(avg);
  double var = 0.0;
  for (float v : avg.pixels()) var += (v - m) * (v - m);
  var /= avg.size() - 1;
  CHECK(m == doctest::Approx(400.0).epsilon(0.01));
  CHECK(var == doctest::Approx(100.0).epsilon(0.10));
  CHECK_THROWS_AS(averaged_poisson_noise(flat, 0, 1), InvalidArgument);
}
