#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "scatterbench/dataset.hpp"
#include "scatterbench/errors.hpp"

using namespace scatterbench;
using namespace scatterbench::sim;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scatterbench_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Image2D random_image(std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, 3.0f);
  Image2D img(h, w);
  for (float& v : img.pixels()) v = n(rng);
  return img;
}

template <class T>
T read_le(const std::string& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

ScanGeometry tiny_geometry(int views) {
  ScanGeometry g = ScanGeometry::desk_scale();
  g.n_views = views;
  return g;
}

}  // namespace

TEST_CASE("SCB1 layout and bit-exact round-trip") {
  ScatterSample s{random_image(3, 4, 1), random_image(3, 4, 2), random_image(3, 4, 3), {130.0, 40.0},
                  0x0123456789abcdefULL};
  s.input(1, 2) = -0.0f;
  std::ostringstream os;
  write_scb1(os, s);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 4 + 4 + 3 * (8 + 12 * 4) + 8 + 8);
  CHECK(bytes.substr(0, 4) == "SCB1");
  CHECK(read_le<std::uint32_t>(bytes, 4) == 1u);
  CHECK(read_le<std::uint32_t>(bytes, 8) == 3u);
  CHECK(read_le<std::uint32_t>(bytes, 12) == 4u);
  CHECK(read_le<float>(bytes, 16) == s.input(0, 0));
  CHECK(read_le<float>(bytes, bytes.size() - 16) == 130.0f);
  CHECK(read_le<float>(bytes, bytes.size() - 12) == 40.0f);
  CHECK(read_le<std::uint64_t>(bytes, bytes.size() - 8) == s.geometry_hash);

  std::istringstream is(bytes);
  const ScatterSample back = read_scb1(is);
  CHECK(back == s);
  CHECK(std::signbit(back.input(1, 2)));
}

TEST_CASE("SCB1 rejects corrupt streams") {
  std::istringstream bad_magic("SCBX\x01\0\0\0");
  CHECK_THROWS_AS(read_scb1(bad_magic), IoError);
  ScatterSample s{random_image(2, 2, 1), random_image(2, 2, 2), random_image(2, 2, 3), {120.0, 30.0}, 7};
  std::ostringstream os;
  write_scb1(os, s);
  std::istringstream truncated(os.str().substr(0, 30));
  CHECK_THROWS_AS(read_scb1(truncated), IoError);
  CHECK_THROWS_AS(read_scb1(fs::path("/nonexistent/file.scb")), IoError);
}

TEST_CASE("manifest round-trip") {
  const fs::path dir = fresh_dir("manifest");
  fs::create_directories(dir);
  const std::vector<ManifestEntry> entries{{"a.scb", {120.0, 30.0}, 1, 0}, {"b.scb", {160.0, 180.0}, 3, 7}};
  write_manifest(dir / "manifest.csv", entries);
  CHECK(read_manifest(dir / "manifest.csv") == entries);
  CHECK_FALSE(fs::exists(dir / "manifest.csv.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("generate_dataset writes one sample per phantom, FOM, view and noise level") {
  const fs::path dir = fresh_dir("generate");
  const std::vector<VoxelPhantom> phantoms{build_phantom(water_cylinder(40.0), VoxelGrid{32, 32, 32, 4.0})};
  const std::vector<FomSize> foms{{120.0, 30.0}, {160.0, 90.0}};
  const auto entries = generate_dataset(phantoms, tiny_geometry(4), foms, 1, dir, {});
  CHECK(entries.size() == 8);
  const auto manifest = read_manifest(dir / kManifestName);
  CHECK(manifest == entries);
  for (const auto& e : manifest) CHECK(fs::exists(dir / e.path));
  CHECK(fs::exists(dir / "detector_sizes.csv"));

  const auto samples = load_dataset(dir / kManifestName);
  REQUIRE(samples.size() == 8);
  for (const auto& s : samples) {
    CHECK(s.input.same_shape(s.target));
    CHECK(s.geometry_hash == tiny_geometry(4).hash());
    // Target is the noiseless surrogate, which is smooth.
    CHECK(high_frequency_energy_fraction(s.target, 0.25) < 0.05);
  }
  CHECK(samples[0].fom == foms[0]);
  CHECK(samples[7].fom == foms[1]);

  const fs::path again = fresh_dir("generate_again");
  generate_dataset(phantoms, tiny_geometry(4), foms, 1, again, {});
  for (const auto& e : manifest) CHECK(slurp(dir / e.path) == slurp(again / e.path));
  CHECK(slurp(dir / kManifestName) == slurp(again / kManifestName));
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("noise levels average realizations") {
  const fs::path dir = fresh_dir("levels");
  const std::vector<VoxelPhantom> phantoms{build_phantom(water_cylinder(40.0), VoxelGrid{32, 32, 32, 4.0})};
  const std::vector<FomSize> foms{{120.0, 30.0}};
  const auto entries = generate_dataset(phantoms, tiny_geometry(2), foms, 3, dir, {});
  CHECK(entries.size() == 6);
  const auto samples = load_dataset(dir / kManifestName);
  // Same view and target across levels, different noise.
  CHECK(samples[0].target == samples[1].target);
  CHECK_FALSE(samples[0].input == samples[1].input);
  fs::remove_all(dir);
}

TEST_CASE("generate_dataset error contract") {
  const std::vector<VoxelPhantom> phantoms{build_phantom(water_cylinder(40.0), VoxelGrid{32, 32, 32, 4.0})};
  const std::vector<FomSize> foms{{120.0, 30.0}};
  const fs::path blocker = fresh_dir("blocker");
  { std::ofstream(blocker) << "x"; }
  CHECK_THROWS_AS(generate_dataset(phantoms, tiny_geometry(1), foms, 1, blocker / "sub", {}), IoError);
  CHECK_THROWS_AS(generate_dataset(phantoms, tiny_geometry(1), {}, 1, blocker / "sub", {}), InvalidArgument);
  CHECK_THROWS_AS(load_dataset(blocker / "missing.csv"), IoError);
  fs::remove(blocker);
}

TEST_CASE("sample seeds are distinct per index") {
  CHECK(sample_seed(1, 0, 0, 0, 1) != sample_seed(1, 0, 0, 1, 1));
  CHECK(sample_seed(1, 0, 1, 0, 1) != sample_seed(1, 1, 0, 0, 1));
  CHECK(sample_seed(1, 0, 0, 0, 1) != sample_seed(2, 0, 0, 0, 1));
  CHECK(sample_seed(5, 1, 2, 3, 4) == sample_seed(5, 1, 2, 3, 4));
}
