#include "scatterbench/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "scatterbench/errors.hpp"
#include "scatterbench/signal_prep.hpp"

namespace scatterbench::sim {

namespace fs = std::filesystem;

namespace {

void write_image(std::ostream& os, const Image2D& img) {
  detail::write_u32(os, static_cast<std::uint32_t>(img.height()));
  detail::write_u32(os, static_cast<std::uint32_t>(img.width()));
  detail::write_f32s(os, img.pixels());
}

Image2D read_image(std::istream& is) {
  const std::uint32_t h = detail::read_u32(is, "SCB1");
  const std::uint32_t w = detail::read_u32(is, "SCB1");
  if (static_cast<std::uint64_t>(h) * w > (1ULL << 28)) throw IoError("SCB1: implausible image size");
  std::vector<float> data(static_cast<std::size_t>(h) * w);
  detail::read_f32s(is, data, "SCB1");
  return Image2D(h, w, std::move(data));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_scb1(std::ostream& os, const ScatterSample& s) {
  os.write("SCB1", 4);
  detail::write_u32(os, kScb1Version);
  write_image(os, s.input);
  write_image(os, s.target);
  write_image(os, s.flat);
  detail::write_f32(os, static_cast<float>(s.fom.diameter_mm));
  detail::write_f32(os, static_cast<float>(s.fom.height_mm));
  detail::write_u64(os, s.geometry_hash);
}

ScatterSample read_scb1(std::istream& is) {
  detail::expect_magic(is, "SCB1", "SCB1");
  const std::uint32_t version = detail::read_u32(is, "SCB1");
  if (version != kScb1Version) throw IoError("SCB1: unsupported version " + std::to_string(version));
  ScatterSample s;
  s.input = read_image(is);
  s.target = read_image(is);
  s.flat = read_image(is);
  s.fom.diameter_mm = detail::read_f32(is, "SCB1");
  s.fom.height_mm = detail::read_f32(is, "SCB1");
  s.geometry_hash = detail::read_u64(is, "SCB1");
  return s;
}

void write_scb1(const fs::path& path, const ScatterSample& sample) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_scb1(os, sample);
  if (!os) throw IoError("failed writing " + path.string());
}

ScatterSample read_scb1(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_scb1(is);
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    for (const ManifestEntry& e : entries) {
      os << e.path << ',' << format_number(e.fom.diameter_mm) << ',' << format_number(e.fom.height_mm) << ','
         << e.noise_level << ',' << e.view_index << '\n';
    }
    if (!os) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move manifest into place: " + ec.message());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string fields[5];
    for (auto& f : fields) {
      if (!std::getline(ls, f, ',')) throw IoError("manifest line " + std::to_string(lineno) + ": expected 5 fields");
    }
    try {
      out.push_back({fields[0], {std::stod(fields[1]), std::stod(fields[2])}, std::stoi(fields[3]),
                     std::stoi(fields[4])});
    } catch (const std::exception&) {
      throw IoError("manifest line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

ProjectionSet simulate_projections(const VoxelPhantom& phantom, const ScanGeometry& geom, const FomSize& fom,
                                   const SimulationConfig& cfg) {
  ProjectionSet set = forward_project(phantom, geom, fom, cfg.i0);
  set.scatter.reserve(set.primary.size());
  for (const Image2D& p : set.primary) {
    set.scatter.push_back(scatter_surrogate(p, set.flat, cfg.scatter_amp, cfg.sigma_frac));
  }
  return set;
}

ScatterSample make_sample(const ProjectionSet& set, int view, int noise_level, std::uint64_t seed, double floor) {
  const Image2D& primary = set.primary.at(view);
  const Image2D& scatter = set.scatter.at(view);
  Image2D total(primary.height(), primary.width());
  for (std::size_t i = 0; i < total.size(); ++i) total.pixels()[i] = primary.pixels()[i] + scatter.pixels()[i];
  const Image2D noisy = averaged_poisson_noise(total, noise_level, seed);
  ScatterSample s;
  s.input = prep::linearize(noisy, set.flat, set.fom, floor).data;
  s.target = prep::normalize_scatter(scatter, set.flat, set.fom, floor).data;
  s.flat = set.flat;
  s.fom = set.fom;
  s.geometry_hash = set.geometry.hash();
  return s;
}

std::uint64_t sample_seed(std::uint64_t base, int phantom, int fom, int view, int noise_level) {
  std::uint64_t h = splitmix64(base);
  for (int v : {phantom, fom, view, noise_level}) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
  return h;
}

std::vector<ManifestEntry> generate_dataset(std::span<const VoxelPhantom> phantoms, const ScanGeometry& geom,
                                            std::span<const FomSize> fom_grid, int noise_levels,
                                            const fs::path& out_dir, const SimulationConfig& cfg) {
  if (fom_grid.empty()) throw InvalidArgument("generate_dataset: empty FOM grid");
  if (phantoms.empty()) throw InvalidArgument("generate_dataset: no phantoms");
  if (noise_levels < 1) throw InvalidArgument("generate_dataset: noise_levels must be >= 1");
  geom.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  std::ostringstream sizes;
  sizes << "fom_d,fom_h,rows,cols\n";
  for (std::size_t f = 0; f < fom_grid.size(); ++f) {
    const DetectorWindow win = active_area(geom, fom_grid[f]);
    sizes << format_number(fom_grid[f].diameter_mm) << ',' << format_number(fom_grid[f].height_mm) << ','
          << win.rows << ',' << win.cols << '\n';
  }
  for (std::size_t p = 0; p < phantoms.size(); ++p) {
    for (std::size_t f = 0; f < fom_grid.size(); ++f) {
      const ProjectionSet set = simulate_projections(phantoms[p], geom, fom_grid[f], cfg);
      for (int view = 0; view < geom.n_views; ++view) {
        for (int level = 1; level <= noise_levels; ++level) {
          const std::uint64_t seed = sample_seed(cfg.seed, static_cast<int>(p), static_cast<int>(f), view, level);
          const ScatterSample s = make_sample(set, view, level, seed, cfg.floor);
          char name[96];
          std::snprintf(name, sizeof(name), "p%02zu_f%02zu_v%03d_n%02d.scb", p, f, view, level);
          write_scb1(out_dir / name, s);
          entries.push_back({name, fom_grid[f], level, view});
        }
      }
    }
  }
  {
    std::ofstream os(out_dir / "detector_sizes.csv", std::ios::trunc);
    if (!os) throw IoError("cannot write detector_sizes.csv in " + out_dir.string());
    os << sizes.str();
  }
  write_manifest(out_dir / kManifestName, entries);
  return entries;
}

std::vector<ScatterSample> load_dataset(const fs::path& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  std::vector<ScatterSample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) out.push_back(read_scb1(dir / e.path));
  return out;
}

}  // namespace scatterbench::sim
