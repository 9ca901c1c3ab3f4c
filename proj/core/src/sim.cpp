#include "scatterbench/sim.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench::sim {

void VoxelGrid::validate() const {
  if (nx < 1 || ny < 1 || nz < 1) throw InvalidArgument("voxel grid: dimensions must be >= 1");
  if (!(voxel_mm > 0.0)) throw InvalidArgument("voxel grid: voxel size must be > 0");
}

PhantomSpec water_cylinder(double radius_mm) {
  return PhantomSpec{{Cylinder{0.0, 0.0, radius_mm, 0.0, materials::kWater}}};
}

PhantomSpec cylinder_with_inserts(double body_radius_mm, double body_mu, const std::vector<Insert>& inserts) {
  PhantomSpec spec;
  spec.shapes.push_back(Cylinder{0.0, 0.0, body_radius_mm, 0.0, body_mu});
  for (const Insert& in : inserts) spec.shapes.push_back(Cylinder{in.x_mm, in.y_mm, in.radius_mm, 0.0, in.mu});
  return spec;
}

PhantomSpec sedentex_like(double body_radius_mm) {
  const double ring = 0.55 * body_radius_mm;
  const double rod = 0.12 * body_radius_mm;
  const double mus[] = {materials::kAir, materials::kLdpe, materials::kDelrin, materials::kPtfe,
                        materials::kAluminium};
  std::vector<Insert> inserts;
  for (int i = 0; i < 5; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 5.0;
    inserts.push_back({ring * std::cos(a), ring * std::sin(a), rod, mus[i]});
  }
  return cylinder_with_inserts(body_radius_mm, materials::kPmma, inserts);
}

namespace {

void check_inside(const Shape& shape, const VoxelGrid& g) {
  const double hx = g.half_extent_mm(g.nx);
  const double hy = g.half_extent_mm(g.ny);
  const double hz = g.half_extent_mm(g.nz);
  bool ok = true;
  if (const auto* c = std::get_if<Cylinder>(&shape)) {
    ok = c->radius_mm > 0.0 && std::abs(c->cx_mm) + c->radius_mm <= hx &&
         std::abs(c->cy_mm) + c->radius_mm <= hy && c->height_mm <= 2.0 * hz;
  } else if (const auto* e = std::get_if<Ellipsoid>(&shape)) {
    ok = e->ax_mm > 0.0 && e->ay_mm > 0.0 && e->az_mm > 0.0 && std::abs(e->cx_mm) + e->ax_mm <= hx &&
         std::abs(e->cy_mm) + e->ay_mm <= hy && std::abs(e->cz_mm) + e->az_mm <= hz;
  }
  if (!ok) throw InvalidArgument("phantom shape does not lie inside the voxel grid");
}

bool contains(const Shape& shape, double x, double y, double z) {
  if (const auto* c = std::get_if<Cylinder>(&shape)) {
    const double dx = x - c->cx_mm;
    const double dy = y - c->cy_mm;
    if (c->height_mm > 0.0 && std::abs(z) > 0.5 * c->height_mm) return false;
    return dx * dx + dy * dy <= c->radius_mm * c->radius_mm;
  }
  const auto& e = std::get<Ellipsoid>(shape);
  const double dx = (x - e.cx_mm) / e.ax_mm;
  const double dy = (y - e.cy_mm) / e.ay_mm;
  const double dz = (z - e.cz_mm) / e.az_mm;
  return dx * dx + dy * dy + dz * dz <= 1.0;
}

double shape_mu(const Shape& shape) {
  return std::visit([](const auto& s) { return s.mu; }, shape);
}

}  // namespace

VoxelPhantom build_phantom(const PhantomSpec& spec, const VoxelGrid& grid) {
  grid.validate();
  for (const Shape& s : spec.shapes) {
    check_inside(s, grid);
    if (!(shape_mu(s) >= 0.0)) throw InvalidArgument("phantom shape has negative attenuation");
  }
  VoxelPhantom ph{grid, std::vector<float>(grid.voxel_count(), 0.0f)};
  for (int k = 0; k < grid.nz; ++k) {
    const double z = grid.centre_mm(k, grid.nz);
    for (int j = 0; j < grid.ny; ++j) {
      const double y = grid.centre_mm(j, grid.ny);
      for (int i = 0; i < grid.nx; ++i) {
        const double x = grid.centre_mm(i, grid.nx);
        float v = 0.0f;
        for (const Shape& s : spec.shapes) {
          if (contains(s, x, y, z)) v = static_cast<float>(shape_mu(s));
        }
        ph.mu[(static_cast<std::size_t>(k) * grid.ny + j) * grid.nx + i] = v;
      }
    }
  }
  return ph;
}

namespace {

// Trilinear lookup in continuous voxel-index coordinates; outside the grid is air.
double trilinear(const VoxelPhantom& ph, double fx, double fy, double fz) {
  const VoxelGrid& g = ph.grid;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int z0 = static_cast<int>(std::floor(fz));
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double tz = fz - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const int z = z0 + dz;
    if (z < 0 || z >= g.nz) continue;
    const double wz = dz ? tz : 1.0 - tz;
    for (int dy = 0; dy < 2; ++dy) {
      const int y = y0 + dy;
      if (y < 0 || y >= g.ny) continue;
      const double wy = dy ? ty : 1.0 - ty;
      const float* row = ph.mu.data() + (static_cast<std::size_t>(z) * g.ny + y) * g.nx;
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx;
        if (x < 0 || x >= g.nx) continue;
        acc += wz * wy * (dx ? tx : 1.0 - tx) * row[x];
      }
    }
  }
  return acc;
}

}  // namespace

double line_integral(const VoxelPhantom& ph, const double source[3], const double target[3]) {
  const VoxelGrid& g = ph.grid;
  // Trilinear support extends half a voxel past the outermost centres.
  const double half[3] = {g.half_extent_mm(g.nx) + 0.5 * g.voxel_mm, g.half_extent_mm(g.ny) + 0.5 * g.voxel_mm,
                          g.half_extent_mm(g.nz) + 0.5 * g.voxel_mm};
  double dir[3];
  double len = 0.0;
  for (int a = 0; a < 3; ++a) {
    dir[a] = target[a] - source[a];
    len += dir[a] * dir[a];
  }
  len = std::sqrt(len);
  if (len == 0.0) return 0.0;
  for (double& d : dir) d /= len;

  double t0 = 0.0;
  double t1 = len;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (std::abs(source[a]) > half[a]) return 0.0;
      continue;
    }
    double ta = (-half[a] - source[a]) / dir[a];
    double tb = (half[a] - source[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return 0.0;

  const double max_step = 0.5 * g.voxel_mm;
  const auto n = static_cast<int>(std::ceil((t1 - t0) / max_step));
  const double step = (t1 - t0) / n;
  const double ox = 0.5 * (g.nx - 1);
  const double oy = 0.5 * (g.ny - 1);
  const double oz = 0.5 * (g.nz - 1);
  const double inv = 1.0 / g.voxel_mm;
  double sum = 0.0;
  for (int s = 0; s < n; ++s) {
    const double t = t0 + (s + 0.5) * step;
    sum += trilinear(ph, (source[0] + t * dir[0]) * inv + ox, (source[1] + t * dir[1]) * inv + oy,
                     (source[2] + t * dir[2]) * inv + oz);
  }
  return sum * step;
}

Ray detector_ray(const ScanGeometry& geom, const DetectorWindow& win, int view, double row, double col) {
  const double beta = geom.view_angle_rad(view);
  const double cb = std::cos(beta);
  const double sb = std::sin(beta);
  const double sid = geom.source_isocenter_mm;
  const double idd = geom.source_detector_mm - sid;
  const double u = detector_u_mm(geom, win, col);
  const double v = detector_v_mm(geom, win, row);
  Ray r{};
  r.source[0] = sid * cb;
  r.source[1] = sid * sb;
  r.source[2] = 0.0;
  // Detector centre opposite the source; u runs along (-sin, cos), v along z.
  r.target[0] = -idd * cb - u * sb;
  r.target[1] = -idd * sb + u * cb;
  r.target[2] = v;
  return r;
}

ProjectionSet forward_project(const VoxelPhantom& ph, const ScanGeometry& geom, const FomSize& fom, double i0) {
  if (!(i0 > 0.0)) throw InvalidArgument("forward_project: i0 must be > 0");
  geom.validate();
  const DetectorWindow win = active_area(geom, fom);
  const VoxelGrid& g = ph.grid;
  // The source circle must stay outside the grid's support.
  const double reach = std::hypot(g.half_extent_mm(g.nx), g.half_extent_mm(g.ny));
  if (geom.source_isocenter_mm <= reach) {
    throw InvalidArgument("forward_project: source trajectory passes through the phantom support");
  }
  ProjectionSet out;
  out.geometry = geom;
  out.fom = fom;
  out.flat = Image2D(win.rows, win.cols, static_cast<float>(i0));
  out.primary.reserve(geom.n_views);
  for (int view = 0; view < geom.n_views; ++view) {
    Image2D img(win.rows, win.cols);
    for (int r = 0; r < win.rows; ++r) {
      for (int c = 0; c < win.cols; ++c) {
        const Ray ray = detector_ray(geom, win, view, r, c);
        img(r, c) = static_cast<float>(i0 * std::exp(-line_integral(ph, ray.source, ray.target)));
      }
    }
    out.primary.push_back(std::move(img));
  }
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

Image2D scatter_surrogate(const Image2D& primary, const Image2D& flat, double amp, double sigma_frac) {
  require_same_shape(primary, flat, "scatter_surrogate");
  if (!(amp > 0.0 && amp < 1.0)) throw InvalidArgument("scatter_surrogate: amp must be in (0, 1)");
  if (!(sigma_frac > 0.0 && sigma_frac < 1.0)) {
    throw InvalidArgument("scatter_surrogate: sigma_frac must be in (0, 1)");
  }
  const std::size_t h = primary.height();
  const std::size_t w = primary.width();
  const std::vector<double> k = gaussian_kernel(sigma_frac * static_cast<double>(w));
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  auto clamp = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };

  std::vector<double> absorbed(h * w);
  for (std::size_t i = 0; i < absorbed.size(); ++i) {
    absorbed[i] = static_cast<double>(flat.pixels()[i]) - static_cast<double>(primary.pixels()[i]);
  }
  std::vector<double> tmp(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * absorbed[r * w + clamp(static_cast<std::ptrdiff_t>(c) + t, w)];
      }
      tmp[r * w + c] = acc;
    }
  }
  Image2D out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * tmp[clamp(static_cast<std::ptrdiff_t>(r) + t, h) * w + c];
      }
      out(r, c) = static_cast<float>(std::max(0.0, amp * acc));
    }
  }
  return out;
}

Image2D averaged_poisson_noise(const Image2D& img, int realizations, std::uint64_t seed) {
  if (realizations < 1) throw InvalidArgument("averaged_poisson_noise: realizations must be >= 1");
  std::mt19937_64 rng(seed);
  Image2D out(img.height(), img.width());
  const double k = realizations;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double mean = img.pixels()[i];
    if (!(mean >= 0.0)) throw InvalidArgument("add_poisson_noise: negative or NaN mean");
    if (mean == 0.0) continue;
    std::poisson_distribution<long long> dist(k * mean);
    out.pixels()[i] = static_cast<float>(static_cast<double>(dist(rng)) / k);
  }
  return out;
}

Image2D add_poisson_noise(const Image2D& img, std::uint64_t seed) { return averaged_poisson_noise(img, 1, seed); }

double high_frequency_energy_fraction(const Image2D& img, double cutoff) {
  if (img.empty()) throw InvalidArgument("high_frequency_energy_fraction: empty image");
  const int h = static_cast<int>(img.height());
  const int w = static_cast<int>(img.width());
  const int wc = w / 2 + 1;
  std::vector<double> in(img.values().begin(), img.values().end());
  auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * wc));
  fftw_plan plan = fftw_plan_dft_r2c_2d(h, w, in.data(), spec, FFTW_ESTIMATE);
  fftw_execute(plan);
  double total = 0.0;
  double high = 0.0;
  for (int r = 0; r < h; ++r) {
    const double fy = static_cast<double>(r <= h / 2 ? r : r - h) / h;
    for (int c = 0; c < wc; ++c) {
      const double fx = static_cast<double>(c) / w;
      // Half-spectrum: interior columns stand for their conjugate twin too.
      const double mult = (c == 0 || (w % 2 == 0 && c == w / 2)) ? 1.0 : 2.0;
      const double e = mult * (spec[r * wc + c][0] * spec[r * wc + c][0] + spec[r * wc + c][1] * spec[r * wc + c][1]);
      total += e;
      if (std::hypot(fx, fy) > cutoff) high += e;
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(spec);
  return total > 0.0 ? high / total : 0.0;
}

}  // namespace scatterbench::sim
