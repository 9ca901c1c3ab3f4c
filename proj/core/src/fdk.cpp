#include "scatterbench/fdk.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "scatterbench/errors.hpp"

namespace scatterbench::fdk {

namespace {

constexpr double kPi = std::numbers::pi;

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
struct PlanFree {
  void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using PlanPtr = std::unique_ptr<fftw_plan_s, PlanFree>;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Row-wise ramp filter, convolution with the band-limited Ram-Lak kernel in the
// frequency domain. The kernel is sampled in space and zero padded, which avoids
// the DC offset of a frequency-sampled |f| ramp.
class RampFilter {
 public:
  RampFilter(std::size_t cols, double spacing, bool apodize) : cols_(cols), n_(next_pow2(2 * cols)) {
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n_)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n_ / 2 + 1))));
    forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_.get(), spec_.get(), FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_.get(), real_.get(), FFTW_ESTIMATE));
    std::fill_n(real_.get(), n_, 0.0);
    const auto half = static_cast<std::ptrdiff_t>(n_ / 2);
    for (std::ptrdiff_t k = -half + 1; k < half; ++k) {
      double h = 0.0;
      if (k == 0) {
        h = 1.0 / (4.0 * spacing * spacing);
      } else if (k % 2 != 0) {
        h = -1.0 / (static_cast<double>(k * k) * kPi * kPi * spacing * spacing);
      }
      real_.get()[(k + static_cast<std::ptrdiff_t>(n_)) % static_cast<std::ptrdiff_t>(n_)] = h * spacing;
    }
    fftw_execute(forward_.get());
    kernel_.resize(n_ / 2 + 1);
    for (std::size_t f = 0; f <= n_ / 2; ++f) {
      std::complex<double> v(spec_.get()[f][0], spec_.get()[f][1]);
      if (apodize) v *= 0.5 * (1.0 + std::cos(kPi * static_cast<double>(f) / static_cast<double>(n_ / 2)));
      kernel_[f] = v / static_cast<double>(n_);
    }
  }

  void apply(float* row) {
    double* buf = real_.get();
    std::fill_n(buf, n_, 0.0);
    for (std::size_t i = 0; i < cols_; ++i) buf[i] = row[i];
    fftw_execute(forward_.get());
    for (std::size_t f = 0; f <= n_ / 2; ++f) {
      const std::complex<double> v = std::complex<double>(spec_.get()[f][0], spec_.get()[f][1]) * kernel_[f];
      spec_.get()[f][0] = v.real();
      spec_.get()[f][1] = v.imag();
    }
    fftw_execute(inverse_.get());
    for (std::size_t i = 0; i < cols_; ++i) row[i] = static_cast<float>(buf[i]);
  }

 private:
  std::size_t cols_;
  std::size_t n_;
  std::unique_ptr<double, FftwFree> real_;
  std::unique_ptr<fftw_complex, FftwFree> spec_;
  PlanPtr forward_;
  PlanPtr inverse_;
  std::vector<std::complex<double>> kernel_;
};

float bilinear_or_zero(const Image2D& img, double row, double col) {
  if (row < 0.0 || col < 0.0 || row > static_cast<double>(img.height() - 1) ||
      col > static_cast<double>(img.width() - 1)) {
    return 0.0f;
  }
  const auto r0 = static_cast<std::size_t>(row);
  const auto c0 = static_cast<std::size_t>(col);
  const std::size_t r1 = std::min(r0 + 1, img.height() - 1);
  const std::size_t c1 = std::min(c0 + 1, img.width() - 1);
  const double fr = row - static_cast<double>(r0);
  const double fc = col - static_cast<double>(c0);
  const double top = (1.0 - fc) * img(r0, c0) + fc * img(r0, c1);
  const double bottom = (1.0 - fc) * img(r1, c0) + fc * img(r1, c1);
  return static_cast<float>((1.0 - fr) * top + fr * bottom);
}

}  // namespace

bool Volume::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

double parker_weight(double beta, double gamma, double delta) {
  const double end = kPi + 2.0 * delta;
  if (beta < 0.0 || beta > end) return 0.0;
  if (beta < 2.0 * delta - 2.0 * gamma) {
    const double s = std::sin(0.25 * kPi * beta / (delta - gamma));
    return s * s;
  }
  if (beta <= kPi - 2.0 * gamma) return 1.0;
  const double s = std::sin(0.25 * kPi * (end - beta) / (delta + gamma));
  return s * s;
}

Volume reconstruct(std::span<const Image2D> projections, const ScanGeometry& geom, const sim::VoxelGrid& grid,
                   const FdkOptions& opts) {
  geom.validate();
  grid.validate();
  if (projections.size() < 2) throw InvalidArgument("fdk: at least two views required");
  if (static_cast<int>(projections.size()) != geom.n_views) {
    throw InvalidArgument("fdk: " + std::to_string(projections.size()) + " projections for a " +
                          std::to_string(geom.n_views) + "-view geometry");
  }
  const std::size_t rows = projections[0].height();
  const std::size_t cols = projections[0].width();
  if (rows == 0 || cols == 0) throw InvalidArgument("fdk: empty projection");
  for (const Image2D& p : projections) {
    if (p.height() != rows || p.width() != cols) throw InvalidArgument("fdk: projections differ in shape");
  }
  const DetectorWindow win{static_cast<int>(rows), static_cast<int>(cols)};
  const double sid = geom.source_isocenter_mm;
  const double sdd = geom.source_detector_mm;
  const double pitch = geom.pixel_pitch_mm;
  const double mag = sid / sdd;
  const bool full = geom.full_scan();
  const double delta = 0.5 * (geom.angular_range_deg * kPi / 180.0 - kPi);
  if (!full) {
    const double fan = std::atan(0.5 * static_cast<double>(cols) * pitch / sdd);
    if (delta < fan) {
      throw InvalidArgument("fdk: a " + std::to_string(geom.angular_range_deg) +
                            " degree arc does not cover 180 degrees plus the fan angle");
    }
  }
  const double dbeta = geom.angular_step_rad();

  Volume vol;
  vol.nx = grid.nx;
  vol.ny = grid.ny;
  vol.nz = grid.nz;
  vol.voxel_mm = static_cast<float>(grid.voxel_mm);
  vol.values.assign(grid.voxel_count(), 0.0f);

  RampFilter ramp(cols, pitch * mag, opts.apodize);
  Image2D q(rows, cols);
  std::vector<double> xs(grid.nx);
  std::vector<double> ys(grid.ny);
  std::vector<double> zs(grid.nz);
  for (int i = 0; i < grid.nx; ++i) xs[i] = grid.centre_mm(i, grid.nx);
  for (int i = 0; i < grid.ny; ++i) ys[i] = grid.centre_mm(i, grid.ny);
  for (int i = 0; i < grid.nz; ++i) zs[i] = grid.centre_mm(i, grid.nz);
  const double row_c = 0.5 * static_cast<double>(rows - 1);
  const double col_c = 0.5 * static_cast<double>(cols - 1);
  const std::size_t slab = static_cast<std::size_t>(grid.nx) * grid.ny;

  for (int view = 0; view < geom.n_views; ++view) {
    const Image2D& p = projections[view];
    const double beta = geom.view_angle_rad(view);
    // Cosine and Parker weighting on the isocentre-scaled detector.
    for (std::size_t r = 0; r < rows; ++r) {
      const double b = detector_v_mm(geom, win, static_cast<double>(r)) * mag;
      for (std::size_t c = 0; c < cols; ++c) {
        const double u = detector_u_mm(geom, win, static_cast<double>(c));
        const double a = u * mag;
        double w = sid / std::sqrt(sid * sid + a * a + b * b);
        w *= full ? 0.5 : parker_weight(beta, -std::atan(u / sdd), delta);
        q(r, c) = static_cast<float>(p(r, c) * w);
      }
      ramp.apply(&q(r, 0));
    }
    const double cb = std::cos(beta);
    const double sb = std::sin(beta);
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double t = -xs[ix] * sb + ys[iy] * cb;
        const double dist = sid - (xs[ix] * cb + ys[iy] * sb);
        const double scale = sdd / dist;
        const double col = t * scale / pitch + col_c;
        if (col < 0.0 || col > static_cast<double>(cols - 1)) continue;
        const double w = dbeta * (sid / dist) * (sid / dist);
        float* out = vol.values.data() + static_cast<std::size_t>(iy) * grid.nx + ix;
        for (int iz = 0; iz < grid.nz; ++iz) {
          const double row = row_c - zs[iz] * scale / pitch;
          out[iz * slab] += static_cast<float>(w * bilinear_or_zero(q, row, col));
        }
      }
    }
  }
  return vol;
}

Volume reconstruct(std::span<const prep::LinearizedProjection> projections, const ScanGeometry& geom,
                   const sim::VoxelGrid& grid, const FdkOptions& opts) {
  std::vector<Image2D> images;
  images.reserve(projections.size());
  for (const auto& p : projections) images.push_back(p.data);
  return reconstruct(std::span<const Image2D>(images), geom, grid, opts);
}

Volume to_hu(const Volume& v, double mu_water) {
  if (!(mu_water > 0.0)) throw InvalidArgument("to_hu: mu_water must be > 0");
  if (v.unit != Unit::Mu) throw InvalidArgument("to_hu: volume is already in HU");
  Volume out = v;
  out.unit = Unit::Hu;
  for (float& x : out.values) x = static_cast<float>(1000.0 * (x - mu_water) / mu_water);
  return out;
}

Image2D axial_slice(const Volume& v, int z) {
  if (z < 0 || z >= v.nz) throw InvalidArgument("axial_slice: z outside the volume");
  const std::size_t slab = static_cast<std::size_t>(v.nx) * v.ny;
  const auto first = v.values.begin() + static_cast<std::ptrdiff_t>(z * slab);
  return Image2D(v.ny, v.nx, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(slab)));
}

std::vector<std::uint8_t> cylinder_mask(const Volume& v, double radius_mm, double half_height_mm) {
  std::vector<std::uint8_t> mask(v.values.size(), 0);
  const auto centre = [&](int i, int n) { return (i - 0.5 * (n - 1)) * v.voxel_mm; };
  std::size_t k = 0;
  for (int z = 0; z < v.nz; ++z) {
    const bool zin = std::abs(centre(z, v.nz)) <= half_height_mm;
    for (int y = 0; y < v.ny; ++y) {
      for (int x = 0; x < v.nx; ++x, ++k) {
        mask[k] = zin && std::hypot(centre(x, v.nx), centre(y, v.ny)) <= radius_mm ? 1 : 0;
      }
    }
  }
  return mask;
}

namespace {
constexpr char kMagic[5] = "SCV1";
constexpr std::uint32_t kVersion = 1;
constexpr const char* kWhat = "SCV1";
}  // namespace

void write_scv1(std::ostream& os, const Volume& v) {
  if (v.values.size() != static_cast<std::size_t>(v.nx) * v.ny * v.nz) {
    throw InvalidArgument("write_scv1: value count does not match dims");
  }
  os.write(kMagic, 4);
  detail::write_u32(os, kVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(v.nx));
  detail::write_u32(os, static_cast<std::uint32_t>(v.ny));
  detail::write_u32(os, static_cast<std::uint32_t>(v.nz));
  detail::write_f32(os, v.voxel_mm);
  detail::write_u8(os, static_cast<std::uint8_t>(v.unit));
  detail::write_f32s(os, v.values);
  if (!os) throw IoError("SCV1: write failed");
}

Volume read_scv1(std::istream& is) {
  detail::expect_magic(is, kMagic, kWhat);
  const std::uint32_t version = detail::read_u32(is, kWhat);
  if (version != kVersion) throw IoError("SCV1: unsupported version " + std::to_string(version));
  Volume v;
  v.nx = static_cast<int>(detail::read_u32(is, kWhat));
  v.ny = static_cast<int>(detail::read_u32(is, kWhat));
  v.nz = static_cast<int>(detail::read_u32(is, kWhat));
  if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0 || v.nx > 4096 || v.ny > 4096 || v.nz > 4096) {
    throw IoError("SCV1: implausible dimensions");
  }
  v.voxel_mm = detail::read_f32(is, kWhat);
  const std::uint8_t unit = detail::read_u8(is, kWhat);
  if (unit > 1) throw IoError("SCV1: unknown unit tag " + std::to_string(unit));
  v.unit = static_cast<Unit>(unit);
  v.values.resize(static_cast<std::size_t>(v.nx) * v.ny * v.nz);
  detail::read_f32s(is, v.values, kWhat);
  return v;
}

void write_scv1(const std::filesystem::path& path, const Volume& v) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_scv1(os, v);
}

Volume read_scv1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_scv1(is);
}

}  // namespace scatterbench::fdk
