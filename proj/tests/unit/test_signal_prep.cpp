#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "scatterbench/dataset.hpp"
#include "scatterbench/errors.hpp"
#include "scatterbench/signal_prep.hpp"
#include "scatterbench/sim.hpp"

using namespace scatterbench;

namespace {

const FomSize kFom{150.0, 100.0};

Image2D filled(float v) { return Image2D(6, 5, v); }

}  // namespace

TEST_CASE("linearize direct evaluations") {
  const Image2D flat = filled(800.0f);
  const auto zero = prep::linearize(flat, flat, kFom);
  for (float v : zero.data.pixels()) CHECK(v == 0.0f);
  const auto one = prep::linearize(filled(800.0f / std::exp(1.0f)), flat, kFom);
  for (float v : one.data.pixels()) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  const auto floored = prep::linearize(filled(0.0f), flat, kFom, 1e-6);
  for (float v : floored.data.pixels()) {
    CHECK(v == doctest::Approx(13.8155).epsilon(1e-5));
  }
  const auto lin = prep::linearize(filled(400.0f), flat, kFom);
  CHECK(lin.fom == kFom);
}

TEST_CASE("linearize validates its inputs") {
  Image2D flat = filled(800.0f);
  CHECK_THROWS_AS(prep::linearize(Image2D(6, 4, 1.0f), flat, kFom), InvalidArgument);
  flat(2, 2) = 0.0f;
  CHECK_THROWS_AS(prep::linearize(filled(1.0f), flat, kFom), InvalidArgument);
  CHECK_THROWS_AS(prep::normalize_scatter(filled(-1.0f), filled(1.0f), kFom), InvalidArgument);
}

TEST_CASE("normalize_scatter direct evaluations") {
  const Image2D flat = filled(1000.0f);
  const auto none = prep::normalize_scatter(flat, flat, kFom);
  for (float v : none.data.pixels()) CHECK(v == 0.0f);
  const auto fifth = prep::normalize_scatter(filled(200.0f), flat, kFom);
  for (float v : fifth.data.pixels()) {
    CHECK(v == doctest::Approx(1.6094).epsilon(1e-4));
  }
  const Image2D s = sim::scatter_surrogate(filled(0.0f), flat, 0.4, 0.25);
  const auto surrogate = prep::normalize_scatter(s, flat, kFom);
  for (float v : surrogate.data.pixels()) {
    CHECK(v == doctest::Approx(0.9163).epsilon(1e-4));
  }
}

TEST_CASE("correct subtracts in the intensity domain") {
  const prep::LinearizedProjection p{Image2D(3, 3, static_cast<float>(-std::log(0.6))), kFom};
  const prep::NormalizedScatter s{Image2D(3, 3, static_cast<float>(-std::log(0.2))), kFom};
  const auto res = prep::correct(p, s);
  for (float v : res.projection.data.pixels()) CHECK(v == doctest::Approx(0.9163).epsilon(1e-4));
  CHECK(res.clamped_pixels == 0);

  const prep::NormalizedScatter none{Image2D(3, 3, std::numeric_limits<float>::infinity()), kFom};
  const auto same = prep::correct(p, none);
  for (std::size_t i = 0; i < 9; ++i) CHECK(same.projection.data.pixels()[i] == doctest::Approx(p.data.pixels()[i]));

  const auto log_domain = prep::correct(p, s, prep::kDefaultEps, prep::SubtractionDomain::LogDomain);
  CHECK(log_domain.projection.data(0, 0) == doctest::Approx(-std::log(0.6) - 0.2).epsilon(1e-6));
}

TEST_CASE("correct clamps and counts negative residuals") {
  const prep::LinearizedProjection p{Image2D(2, 2, static_cast<float>(-std::log(0.3))), kFom};
  prep::NormalizedScatter s{Image2D(2, 2, static_cast<float>(-std::log(0.1))), kFom};
  s.data(0, 0) = static_cast<float>(-std::log(0.5));
  s.data(1, 1) = static_cast<float>(-std::log(0.3));
  const auto res = prep::correct(p, s, 1e-6);
  CHECK(res.clamped_pixels == 2);
  CHECK(res.projection.data(0, 0) == doctest::Approx(-std::log(1e-6)).epsilon(1e-6));
  CHECK_THROWS_AS(prep::correct(p, {Image2D(2, 3), kFom}), InvalidArgument);
}

TEST_CASE("larger predicted scatter never lowers the corrected value") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double pv = u(rng);
    const double s1 = pv + u(rng);
    const double s2 = s1 + u(rng);
    const prep::LinearizedProjection p{Image2D(1, 1, static_cast<float>(pv)), kFom};
    const float more = prep::correct(p, {Image2D(1, 1, static_cast<float>(s1)), kFom}).projection.data(0, 0);
    const float less = prep::correct(p, {Image2D(1, 1, static_cast<float>(s2)), kFom}).projection.data(0, 0);
    CHECK(more >= less);
  }
}

TEST_CASE("perfect prediction on a noiseless simulation recovers the primary") {
  const auto ph = sim::build_phantom(sim::sedentex_like(55.0), {});
  ScanGeometry g = ScanGeometry::desk_scale();
  g.n_views = 2;
  const auto set = sim::simulate_projections(ph, g, kFom, {});
  for (std::size_t v = 0; v < set.primary.size(); ++v) {
    Image2D total = set.primary[v];
    for (std::size_t i = 0; i < total.size(); ++i) total.pixels()[i] += set.scatter[v].pixels()[i];
    const auto corrected =
        prep::correct(prep::linearize(total, set.flat, kFom), prep::normalize_scatter(set.scatter[v], set.flat, kFom));
    const auto reference = prep::linearize(set.primary[v], set.flat, kFom);
    CHECK(corrected.clamped_pixels == 0);
    for (std::size_t i = 0; i < total.size(); ++i) {
      CHECK(corrected.projection.data.pixels()[i] == doctest::Approx(reference.data.pixels()[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("linearize and to_intensity round-trip") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(1.0f, 900.0f);
  Image2D intensity(9, 7);
  for (float& v : intensity.pixels()) v = u(rng);
  const Image2D flat(9, 7, 1000.0f);
  const Image2D back = prep::to_intensity(prep::linearize(intensity, flat, kFom).data, flat);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back.pixels()[i] == doctest::Approx(intensity.pixels()[i]).epsilon(1e-6));
  }
}
