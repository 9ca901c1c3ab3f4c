#include "scatterbench/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "scatterbench/errors.hpp"
#include "scatterbench/harness/csv.hpp"
#include "scatterbench/harness/lock.hpp"
#include "scatterbench/harness/svg.hpp"
#include "scatterbench/nn/checkpoint.hpp"
#include "scatterbench/signal_prep.hpp"

namespace scatterbench::harness {

namespace fs = std::filesystem;

namespace {

using sim::format_number;

constexpr resample::Method kBicubic{resample::Kind::Bicubic, false};

double parse_double(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string(what) + ": not a number: '" + std::string(text) + "'");
  }
}

std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

void log(const std::string& msg) { std::cerr << "[scatterbench] " << msg << '\n'; }

std::vector<FomSize> grid_of(std::initializer_list<double> diameters, std::initializer_list<double> heights) {
  std::vector<FomSize> out;
  for (double d : diameters) {
    for (double h : heights) out.push_back({d, h});
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

fs::path dataset_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "dataset"; }

std::vector<sim::ScatterSample> load_training_set(const ExperimentConfig& cfg) {
  const fs::path manifest = dataset_dir(cfg) / sim::kManifestName;
  if (!fs::exists(manifest)) throw IoError("no dataset at " + manifest.string() + "; run `simulate` first");
  return sim::load_dataset(manifest);
}

std::vector<sim::ScatterSample> held_out_samples(const ExperimentConfig& cfg) {
  const auto phantoms = build_phantoms(cfg.test_phantoms, cfg.grid);
  std::vector<int> views;
  const int n = cfg.geometry.n_views;
  for (int k = 0; k < cfg.test_eval_views; ++k) views.push_back(static_cast<int>((static_cast<long long>(k) * n) / cfg.test_eval_views));
  sim::SimulationConfig sc = cfg.train_sim;
  sc.i0 = cfg.test_i0;
  sc.seed = cfg.seed ^ 0x7465737453ULL;
  return simulate_samples(phantoms, cfg.geometry, cfg.test_foms, views, 1, sc);
}

auxnet::NetSpec spec_for(const ExperimentConfig& cfg, Resolution r) {
  return {r.h, r.w, auxnet::default_blocks(r.h, r.w), cfg.base_channels, 0.01f};
}

std::string method_name(Resolution r) { return "net-" + to_string(r); }

struct TrainOutcome {
  auxnet::TrainResult result;
  auxnet::Evaluation validation;
};

TrainOutcome train_one(const ExperimentConfig& cfg, nn::Net& net, Resolution r,
                       std::span<const sim::ScatterSample> samples, const auxnet::TrainConfig& tc,
                       const fs::path& log_path) {
  const auxnet::NetSpec spec = spec_for(cfg, r);
  log("training " + method_name(r) + " on " + std::to_string(samples.size()) + " samples");
  TrainOutcome out;
  out.result = auxnet::train(net, spec, samples, tc, [&](const auxnet::EpochLog& e) {
    log("  epoch " + std::to_string(e.epoch) + " train_mse " + format_number(e.train_mse) + " val_mse " +
        format_number(e.val_mse));
  });
  std::ofstream os(log_path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + log_path.string());
  auxnet::write_training_log(os, out.result.epochs);
  auxnet::InferenceWrapper wrapper(net, r.h, r.w, tc.w_max_mm, tc.h_max_mm);
  out.validation = auxnet::evaluate(wrapper, samples, out.result.val_indices, cfg.mape_mode);
  return out;
}

}  // namespace

Resolution parse_resolution(std::string_view text) {
  const auto parts = split_on(text, 'x');
  if (parts.size() != 2) throw InvalidArgument("resolution '" + std::string(text) + "': expected HxW");
  const double h = parse_double(parts[0], "resolution");
  const double w = parse_double(parts[1], "resolution");
  if (h < 1 || w < 1 || h != std::floor(h) || w != std::floor(w)) {
    throw InvalidArgument("resolution '" + std::string(text) + "': expected positive integers");
  }
  return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
}

std::string to_string(const Resolution& r) { return std::to_string(r.h) + "x" + std::to_string(r.w); }

FomSize parse_fom(std::string_view text) {
  const auto parts = split_on(text, 'x');
  if (parts.size() != 2) throw InvalidArgument("FOM '" + std::string(text) + "': expected DIAMETERxHEIGHT");
  FomSize f{parse_double(parts[0], "FOM"), parse_double(parts[1], "FOM")};
  f.validate();
  return f;
}

std::string to_string(const FomSize& f) { return format_number(f.diameter_mm) + "x" + format_number(f.height_mm); }

sim::PhantomSpec parse_phantom(std::string_view text) {
  const auto parts = split_on(text, ':');
  const std::string& kind = parts[0];
  auto arg = [&](std::size_t i) {
    const double v = parse_double(parts[i], "phantom '" + std::string(text) + "'");
    if (!(v > 0.0)) throw InvalidArgument("phantom '" + std::string(text) + "': sizes must be > 0");
    return v;
  };
  if (kind == "water" && parts.size() == 2) return sim::water_cylinder(arg(1));
  if (kind == "pmma" && parts.size() == 2) return sim::cylinder_with_inserts(arg(1), sim::materials::kPmma, {});
  if (kind == "sedentex" && parts.size() == 2) return sim::sedentex_like(arg(1));
  if (kind == "ellipsoid" && parts.size() == 4) {
    return sim::PhantomSpec{{sim::Ellipsoid{0.0, 0.0, 0.0, arg(1), arg(2), arg(3), sim::materials::kWater}}};
  }
  throw InvalidArgument("unknown phantom preset '" + std::string(text) +
                        "' (expected water:R, pmma:R, sedentex:R or ellipsoid:AX:AY:AZ)");
}

std::optional<double> water_cylinder_radius(std::string_view text) {
  const auto parts = split_on(text, ':');
  if (parts.size() == 2 && parts[0] == "water") return parse_double(parts[1], "phantom");
  return std::nullopt;
}

std::vector<FomSize> full_train_foms() { return grid_of({120, 140, 160}, {30, 60, 90, 120, 150, 180}); }

std::vector<FomSize> full_test_foms() {
  return grid_of({130, 150, 170}, {40, 50, 70, 80, 100, 110, 130, 140, 160, 170});
}

std::vector<FomSize> desk_train_foms() { return grid_of({120, 160}, {30, 90, 180}); }

std::vector<FomSize> desk_test_foms() { return grid_of({130, 150, 170}, {40, 100, 170}); }

std::vector<Resolution> default_resolutions() { return {{320, 256}, {160, 128}, {80, 64}, {40, 32}, {20, 16}}; }

ExperimentConfig load_experiment(const Config& c, const CliOverrides& overrides) {
  ExperimentConfig cfg;
  cfg.output_dir = c.get_string("output.dir", cfg.output_dir.string());
  cfg.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(cfg.seed)));
  if (overrides.seed) cfg.seed = *overrides.seed;

  ScanGeometry& g = cfg.geometry;
  g.source_isocenter_mm = c.get_double("geometry.source_isocenter_mm", g.source_isocenter_mm);
  g.source_detector_mm = c.get_double("geometry.source_detector_mm", g.source_detector_mm);
  g.n_views = static_cast<int>(c.get_int("geometry.n_views", g.n_views));
  g.angular_range_deg = c.get_double("geometry.angular_range_deg", g.angular_range_deg);
  g.detector_rows = static_cast<int>(c.get_int("geometry.detector_rows", g.detector_rows));
  g.detector_cols = static_cast<int>(c.get_int("geometry.detector_cols", g.detector_cols));
  g.pixel_pitch_mm = c.get_double("geometry.pixel_pitch_mm", g.pixel_pitch_mm);
  g.validate();

  const int n = static_cast<int>(c.get_int("grid.size", cfg.grid.nx));
  cfg.grid.nx = cfg.grid.ny = cfg.grid.nz = n;
  cfg.grid.voxel_mm = c.get_double("grid.voxel_mm", cfg.grid.voxel_mm);
  cfg.grid.validate();

  sim::SimulationConfig& s = cfg.train_sim;
  s.i0 = c.get_double("sim.i0", s.i0);
  s.scatter_amp = c.get_double("sim.scatter_amp", s.scatter_amp);
  s.sigma_frac = c.get_double("sim.sigma_frac", s.sigma_frac);
  s.floor = c.get_double("sim.floor", s.floor);
  s.seed = cfg.seed;
  cfg.test_i0 = c.get_double("sim.test_i0", cfg.test_i0);
  cfg.train_views = static_cast<int>(c.get_int("sim.train_views", cfg.train_views));
  cfg.test_eval_views = static_cast<int>(c.get_int("sim.test_eval_views", cfg.test_eval_views));
  cfg.noise_levels = static_cast<int>(c.get_int("sim.noise_levels", cfg.noise_levels));
  if (!(s.i0 > 0.0) || !(cfg.test_i0 > 0.0)) throw InvalidArgument("sim.i0 and sim.test_i0 must be > 0");
  if (!(s.scatter_amp > 0.0 && s.scatter_amp < 1.0)) throw InvalidArgument("sim.scatter_amp must lie in (0, 1)");
  if (!(s.sigma_frac > 0.0 && s.sigma_frac < 1.0)) throw InvalidArgument("sim.sigma_frac must lie in (0, 1)");
  if (cfg.train_views < 1 || cfg.test_eval_views < 1 || cfg.noise_levels < 1) {
    throw InvalidArgument("sim.train_views, sim.test_eval_views and sim.noise_levels must be >= 1");
  }

  cfg.train_phantoms = c.get_list("phantoms.train", cfg.train_phantoms);
  cfg.test_phantoms = c.get_list("phantoms.test", cfg.test_phantoms);
  for (const auto& p : cfg.train_phantoms) parse_phantom(p);
  for (const auto& p : cfg.test_phantoms) parse_phantom(p);

  if (overrides.full) {
    cfg.train_foms = full_train_foms();
    cfg.test_foms = full_test_foms();
  }
  auto foms = [&](const std::string& key, std::vector<FomSize>& dst) {
    if (!c.has(key)) return;
    dst.clear();
    for (const auto& item : c.get_list(key, {})) dst.push_back(parse_fom(item));
  };
  if (!overrides.full) {
    foms("foms.train", cfg.train_foms);
    foms("foms.test", cfg.test_foms);
  } else {
    c.get_list("foms.train", {});
    c.get_list("foms.test", {});
  }
  if (cfg.train_foms.empty() || cfg.test_foms.empty()) throw InvalidArgument("FOM grids must not be empty");

  if (c.has("sweep.resolutions")) {
    cfg.resolutions.clear();
    for (const auto& item : c.get_list("sweep.resolutions", {})) cfg.resolutions.push_back(parse_resolution(item));
  }
  cfg.model_resolution = parse_resolution(c.get_string("model.resolution", to_string(cfg.model_resolution)));
  cfg.base_channels = static_cast<int>(c.get_int("model.base_channels", cfg.base_channels));
  cfg.model_path = c.get_string("model.path", "");
  for (Resolution r : cfg.resolutions) spec_for(cfg, r).validate();
  spec_for(cfg, cfg.model_resolution).validate();

  auxnet::TrainConfig& t = cfg.train;
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
  t.lr_start = c.get_double("train.lr_start", t.lr_start);
  t.lr_end = c.get_double("train.lr_end", t.lr_end);
  t.lr_decay_epochs = static_cast<int>(c.get_int("train.lr_decay_epochs", t.lr_decay_epochs));
  t.early_stop_patience = static_cast<int>(c.get_int("train.patience", t.early_stop_patience));
  t.max_epochs = static_cast<int>(c.get_int("train.max_epochs", t.max_epochs));
  t.val_fraction = c.get_double("train.val_fraction", t.val_fraction);
  t.folds = static_cast<int>(c.get_int("train.folds", t.folds));
  if (overrides.folds) t.folds = *overrides.folds;
  t.init_head_bias = c.get_bool("train.init_head_bias", t.init_head_bias);
  t.w_max_mm = c.get_double("train.w_max_mm", t.w_max_mm);
  t.h_max_mm = c.get_double("train.h_max_mm", t.h_max_mm);
  t.seed = cfg.seed;
  t.validate();

  cfg.interp_corpus = static_cast<int>(c.get_int("interp.corpus_size", cfg.interp_corpus));
  if (cfg.interp_corpus < 1) throw InvalidArgument("interp.corpus_size must be >= 1");
  if (c.has("interp.factors")) {
    cfg.interp_factors.clear();
    for (const auto& item : c.get_list("interp.factors", {})) {
      const double f = parse_double(item, "interp.factors");
      if (f < 1 || f != std::floor(f)) throw InvalidArgument("interp.factors: expected integers >= 1");
      cfg.interp_factors.push_back(static_cast<int>(f));
    }
  }
  for (const auto& item : c.get_list("interp.methods", {"nearest", "area", "bilinear", "bicubic"})) {
    try {
      cfg.interp_methods.push_back(resample::parse_method(item));
    } catch (const std::exception& e) {
      throw InvalidArgument(std::string("interp.methods: ") + e.what());
    }
  }

  BenchSettings& b = cfg.bench;
  b.batch = static_cast<std::size_t>(c.get_int("bench.batch", static_cast<long long>(b.batch)));
  b.warmup = static_cast<int>(c.get_int("bench.warmup", b.warmup));
  b.passes = static_cast<int>(c.get_int("bench.passes", b.passes));
  b.trim = c.get_double("bench.trim", b.trim);
  b.input = parse_resolution(c.get_string("bench.input", to_string(b.input)));
  if (b.batch < 1 || b.warmup < 0 || b.passes < 1 || !(b.trim >= 0.0 && b.trim < 0.5)) {
    throw InvalidArgument("bench: need batch >= 1, warmup >= 0, passes >= 1, 0 <= trim < 0.5");
  }

  const std::string mape = c.get_string("metrics.mape", "sum");
  if (mape == "sum") {
    cfg.mape_mode = metrics::MapeMode::SumNormalized;
  } else if (mape == "per_pixel") {
    cfg.mape_mode = metrics::MapeMode::PerPixel;
  } else {
    throw InvalidArgument("metrics.mape: expected 'sum' or 'per_pixel'");
  }

  const auto unused = c.unused_keys();
  if (!unused.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& k : unused) msg += " " + k;
    throw InvalidArgument(msg);
  }
  return cfg;
}

std::vector<sim::VoxelPhantom> build_phantoms(std::span<const std::string> presets, const sim::VoxelGrid& grid) {
  std::vector<sim::VoxelPhantom> out;
  out.reserve(presets.size());
  for (const auto& p : presets) out.push_back(sim::build_phantom(parse_phantom(p), grid));
  return out;
}

ScanGeometry with_views(const ScanGeometry& geom, int views) {
  ScanGeometry g = geom;
  g.n_views = views;
  g.validate();
  return g;
}

std::vector<sim::ScatterSample> simulate_samples(std::span<const sim::VoxelPhantom> phantoms, const ScanGeometry& geom,
                                                 std::span<const FomSize> foms, std::span<const int> views,
                                                 int noise_level, const sim::SimulationConfig& cfg) {
  std::vector<sim::ScatterSample> out;
  for (std::size_t p = 0; p < phantoms.size(); ++p) {
    for (std::size_t f = 0; f < foms.size(); ++f) {
      const sim::ProjectionSet set = sim::simulate_projections(phantoms[p], geom, foms[f], cfg);
      std::vector<int> all;
      if (views.empty()) {
        all.resize(static_cast<std::size_t>(geom.n_views));
        std::iota(all.begin(), all.end(), 0);
      }
      for (int v : views.empty() ? std::span<const int>(all) : views) {
        const auto seed = sim::sample_seed(cfg.seed, static_cast<int>(p), static_cast<int>(f), v, noise_level);
        out.push_back(sim::make_sample(set, v, noise_level, seed, cfg.floor));
      }
    }
  }
  return out;
}

std::vector<Image2D> scatter_corpus(const ExperimentConfig& cfg, std::size_t count, Resolution base) {
  if (count == 0) throw InvalidArgument("scatter_corpus: count must be >= 1");
  const auto phantoms = build_phantoms(cfg.train_phantoms, cfg.grid);
  const std::size_t scans = phantoms.size() * cfg.train_foms.size();
  const int views = static_cast<int>((count + scans - 1) / scans);
  const ScanGeometry geom = with_views(cfg.geometry, std::max(views, 2));
  std::vector<Image2D> corpus;
  corpus.reserve(count);
  for (const auto& ph : phantoms) {
    for (const FomSize& fom : cfg.train_foms) {
      const sim::ProjectionSet set = sim::simulate_projections(ph, geom, fom, cfg.train_sim);
      for (int v = 0; v < views && corpus.size() < count; ++v) {
        Image2D ratio = set.scatter[static_cast<std::size_t>(v)];
        for (std::size_t i = 0; i < ratio.size(); ++i) ratio.pixels()[i] /= set.flat.pixels()[i];
        corpus.push_back(resample::resize(ratio, base.h, base.w, kBicubic));
      }
    }
  }
  return corpus;
}

std::vector<InterpRow> run_interp_study(std::span<const Image2D> corpus, std::span<const int> factors,
                                        std::span<const resample::Method> methods) {
  const auto rows = resample::study_interpolation(corpus, factors, methods);
  std::vector<InterpRow> out;
  for (const auto& r : rows) out.push_back({r.method, r.factor, r.mean_mse, 0.0});
  for (InterpRow& r : out) {
    const InterpRow* ref = nullptr;
    for (const InterpRow& c : out) {
      if (c.method == r.method && c.factor > 1 && (!ref || c.factor < ref->factor)) ref = &c;
    }
    r.normalized_mse = ref && ref->mean_mse > 0.0 ? r.mean_mse / ref->mean_mse : 0.0;
  }
  return out;
}

std::vector<CsvRow> interp_table(std::span<const InterpRow> rows) {
  std::vector<CsvRow> table{{"method", "factor", "mean_mse", "normalized_mse"}};
  for (const InterpRow& r : rows) {
    table.push_back({resample::to_string(r.method), std::to_string(r.factor), format_number(r.mean_mse),
                     format_number(r.normalized_mse)});
  }
  return table;
}

double trimmed_mean(std::vector<double> samples, double trim) {
  if (samples.empty()) throw InvalidArgument("trimmed_mean: no samples");
  std::sort(samples.begin(), samples.end());
  const auto drop = static_cast<std::size_t>(std::floor(trim * static_cast<double>(samples.size())));
  const auto first = samples.begin() + static_cast<std::ptrdiff_t>(drop);
  const auto last = samples.end() - static_cast<std::ptrdiff_t>(drop);
  return std::accumulate(first, last, 0.0) / static_cast<double>(last - first);
}

BenchResult benchmark_wrapped(nn::Net& net, Resolution native, const BenchSettings& settings) {
  BenchResult res;
  res.resolution = native;
  res.cost = nn::count_cost(net, {1, 3, native.h, native.w});
  for (const auto& layer : res.cost.per_layer) {
    if (layer.name == "maxpool2") ++res.blocks;
  }
  auxnet::InferenceWrapper wrapper(net, native.h, native.w);
  std::vector<Image2D> images;
  std::vector<FomSize> foms;
  for (std::size_t b = 0; b < settings.batch; ++b) {
    Image2D img(settings.input.h, settings.input.w);
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t c = 0; c < img.width(); ++c) {
        img(r, c) = static_cast<float>(1.0 + 0.5 * std::sin(0.05 * static_cast<double>(r + b)) *
                                                 std::cos(0.03 * static_cast<double>(c)));
      }
    }
    images.push_back(std::move(img));
    foms.push_back({150.0, 100.0});
  }
  for (int i = 0; i < settings.warmup; ++i) wrapper.predict(images, foms);
  std::vector<double> times;
  nn::AllocationTracker::reset_peak();
  const std::size_t base = nn::AllocationTracker::current_bytes();
  for (int i = 0; i < settings.passes; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = wrapper.predict(images, foms);
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  res.peak_alloc = nn::AllocationTracker::peak_bytes() - base;
  res.time_ms = trimmed_mean(std::move(times), settings.trim);
  return res;
}

ScatterPredictor model_predictor(auxnet::InferenceWrapper& wrapper, std::size_t chunk) {
  return [&wrapper, chunk](std::span<const Image2D> inputs, std::span<const FomSize> foms) {
    std::vector<Image2D> out;
    for (std::size_t start = 0; start < inputs.size(); start += chunk) {
      const std::size_t n = std::min(chunk, inputs.size() - start);
      auto part = wrapper.predict(inputs.subspan(start, n), foms.subspan(start, n));
      for (auto& img : part) out.push_back(std::move(img));
    }
    return out;
  };
}

std::vector<std::uint8_t> fom_mask(const fdk::Volume& v, const FomSize& fom) {
  const double half_x = 0.5 * v.nx * v.voxel_mm;
  const double half_z = 0.5 * v.nz * v.voxel_mm;
  return fdk::cylinder_mask(v, std::min(0.5 * fom.diameter_mm, half_x), std::min(0.5 * fom.height_mm, half_z));
}

CorrectionCase evaluate_correction(const sim::VoxelPhantom& phantom, const std::string& name, const FomSize& fom,
                                   const ScanGeometry& geom, const sim::SimulationConfig& sim_cfg,
                                   const ScatterPredictor& predictor, const CorrectionSettings& settings) {
  const sim::ProjectionSet set = sim::simulate_projections(phantom, geom, fom, sim_cfg);
  const std::size_t views = set.primary.size();
  std::vector<Image2D> reference;
  std::vector<Image2D> clean;
  std::vector<Image2D> measured;
  std::vector<Image2D> truth;
  for (std::size_t v = 0; v < views; ++v) {
    Image2D total(set.primary[v].height(), set.primary[v].width());
    for (std::size_t i = 0; i < total.size(); ++i) {
      total.pixels()[i] = set.primary[v].pixels()[i] + set.scatter[v].pixels()[i];
    }
    reference.push_back(prep::linearize(set.primary[v], set.flat, fom, sim_cfg.floor).data);
    clean.push_back(prep::linearize(total, set.flat, fom, sim_cfg.floor).data);
    if (settings.noisy_input) {
      const auto seed = sim::sample_seed(settings.seed, 0, 0, static_cast<int>(v), 1);
      measured.push_back(prep::linearize(sim::add_poisson_noise(total, seed), set.flat, fom, sim_cfg.floor).data);
    } else {
      measured.push_back(clean.back());
    }
    truth.push_back(prep::normalize_scatter(set.scatter[v], set.flat, fom, sim_cfg.floor).data);
  }
  const std::vector<FomSize> foms(views, fom);
  const std::vector<Image2D> predicted = predictor(measured, foms);
  if (predicted.size() != views) throw InvalidArgument("evaluate_correction: predictor returned wrong count");

  CorrectionCase out;
  out.phantom = name;
  out.fom = fom;
  std::vector<Image2D> corrected;
  std::vector<Image2D> oracle;
  for (std::size_t v = 0; v < views; ++v) {
    auto c = prep::correct({measured[v], fom}, {predicted[v], fom}, prep::kDefaultEps);
    out.clamped_pixels += c.clamped_pixels;
    corrected.push_back(std::move(c.projection.data));
    oracle.push_back(prep::correct({clean[v], fom}, {truth[v], fom}, prep::kDefaultEps).projection.data);
  }
  const double mu_w = sim::materials::kWater;
  auto recon = [&](const std::vector<Image2D>& p) {
    return fdk::to_hu(fdk::reconstruct(std::span<const Image2D>(p), geom, phantom.grid), mu_w);
  };
  const fdk::Volume ref = recon(reference);
  const fdk::Volume unc = recon(measured);
  fdk::Volume cor = recon(corrected);
  const fdk::Volume ora = recon(oracle);
  if (!cor.all_finite() || !unc.all_finite()) throw NumericError("evaluate_correction: non-finite reconstruction");
  const auto mask = fom_mask(ref, fom);
  out.rmse_uncorrected = metrics::rmse(unc.values, ref.values, mask);
  out.rmse_corrected = metrics::rmse(cor.values, ref.values, mask);
  out.rmse_oracle = metrics::rmse(ora.values, ref.values, mask);

  const int mid = ref.nz / 2;
  const Image2D ref_slice = fdk::axial_slice(ref, mid);
  const Image2D unc_slice = fdk::axial_slice(unc, mid);
  const Image2D cor_slice = fdk::axial_slice(cor, mid);
  if (settings.water_radius_mm) {
    metrics::RoiSpec roi;
    roi.center_x = 0.5 * (ref.nx - 1);
    roi.center_y = 0.5 * (ref.ny - 1);
    roi.phantom_radius = *settings.water_radius_mm / ref.voxel_mm;
    out.uniformity_reference = metrics::uniformity(ref_slice, roi);
    out.uniformity_uncorrected = metrics::uniformity(unc_slice, roi);
    out.uniformity_corrected = metrics::uniformity(cor_slice, roi);
  }
  const double y = 0.5 * (ref.ny - 1);
  const int samples = 2 * ref.nx;
  out.profile_reference = metrics::line_profile(ref_slice, 0, y, ref.nx - 1, y, samples, ref.voxel_mm);
  out.profile_uncorrected = metrics::line_profile(unc_slice, 0, y, ref.nx - 1, y, samples, ref.voxel_mm);
  out.profile_corrected = metrics::line_profile(cor_slice, 0, y, ref.nx - 1, y, samples, ref.voxel_mm);
  out.corrected_hu = std::move(cor);
  return out;
}

void cmd_simulate(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  const auto phantoms = build_phantoms(cfg.train_phantoms, cfg.grid);
  const ScanGeometry geom = with_views(cfg.geometry, cfg.train_views);
  log("simulating " + std::to_string(phantoms.size()) + " phantoms x " + std::to_string(cfg.train_foms.size()) +
      " FOMs x " + std::to_string(geom.n_views) + " views x " + std::to_string(cfg.noise_levels) + " noise levels");
  const auto entries =
      sim::generate_dataset(phantoms, geom, cfg.train_foms, cfg.noise_levels, dataset_dir(cfg), cfg.train_sim);
  log("wrote " + std::to_string(entries.size()) + " samples to " + dataset_dir(cfg).string());
}

void cmd_interp_study(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  const auto corpus = scatter_corpus(cfg, static_cast<std::size_t>(cfg.interp_corpus));
  const auto rows = run_interp_study(corpus, cfg.interp_factors, cfg.interp_methods);
  write_csv(cfg.output_dir / "interp_study.csv", interp_table(rows));
  LineChart chart;
  chart.title = "Down-up roundtrip error of flat-normalized scatter";
  chart.x_label = "downsampling factor";
  chart.y_label = "MSE normalized to the smallest factor";
  chart.log_x = true;
  chart.log_y = true;
  for (const auto& m : cfg.interp_methods) {
    Series s{resample::to_string(m), {}};
    for (const auto& r : rows) {
      if (r.method == m) s.points.emplace_back(r.factor, r.normalized_mse);
    }
    chart.series.push_back(std::move(s));
  }
  write_text(cfg.output_dir / "interp_study.svg", render_svg(chart));
  log("wrote interp_study.csv and interp_study.svg");
}

void cmd_train(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  const auto samples = load_training_set(cfg);
  const Resolution r = cfg.model_resolution;
  std::vector<CsvRow> summary{{"fold", "best_epoch", "val_mse", "val_mape"}};
  double mape_sum = 0.0;
  for (int fold = 0; fold < cfg.train.folds; ++fold) {
    auxnet::TrainConfig tc = cfg.train;
    tc.fold_index = fold;
    nn::Net net = auxnet::build(spec_for(cfg, r), cfg.seed);
    const std::string suffix = cfg.train.folds > 1 ? "_fold" + std::to_string(fold) : "";
    const TrainOutcome out = train_one(cfg, net, r, samples, tc, cfg.output_dir / ("training_log" + suffix + ".csv"));
    nn::write_scw1(cfg.output_dir / ("model" + suffix + ".scw"), net);
    summary.push_back({std::to_string(fold), std::to_string(out.result.best_epoch),
                       format_number(out.result.best_val_mse), format_number(out.validation.mape)});
    mape_sum += out.validation.mape;
    log("fold " + std::to_string(fold) + ": validation MAPE " + format_number(out.validation.mape) + "%");
  }
  summary.push_back({"mean", "", "", format_number(mape_sum / cfg.train.folds)});
  write_csv(cfg.output_dir / "train_summary.csv", summary);
}

void cmd_sweep(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  const auto samples = load_training_set(cfg);
  const auto test = held_out_samples(cfg);
  std::vector<CsvRow> table{{"method", "params", "flops", "mape", "mse", "time_ms", "peak_alloc"}};
  for (Resolution r : cfg.resolutions) {
    nn::Net net = auxnet::build(spec_for(cfg, r), cfg.seed);
    train_one(cfg, net, r, samples, cfg.train, cfg.output_dir / ("training_log_" + to_string(r) + ".csv"));
    nn::write_scw1(cfg.output_dir / ("model_" + to_string(r) + ".scw"), net);
    auxnet::InferenceWrapper wrapper(net, r.h, r.w, cfg.train.w_max_mm, cfg.train.h_max_mm);
    const auxnet::Evaluation eval = auxnet::evaluate(wrapper, test, {}, cfg.mape_mode);
    const BenchResult bench = benchmark_wrapped(net, r, cfg.bench);
    table.push_back({method_name(r), std::to_string(bench.cost.params), std::to_string(bench.cost.flops),
                     format_number(eval.mape), format_number(eval.mse), format_number(bench.time_ms),
                     std::to_string(bench.peak_alloc)});
    log(method_name(r) + ": test MAPE " + format_number(eval.mape) + "%, " + format_number(bench.time_ms) + " ms");
    write_csv(cfg.output_dir / "sweep.csv", table);
  }
}

void cmd_bench(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  std::vector<CsvRow> table{{"method", "params", "flops", "time_ms", "peak_alloc"}};
  for (Resolution r : cfg.resolutions) {
    nn::Net net = auxnet::build(spec_for(cfg, r), cfg.seed);
    const BenchResult b = benchmark_wrapped(net, r, cfg.bench);
    table.push_back({method_name(r), std::to_string(b.cost.params), std::to_string(b.cost.flops),
                     format_number(b.time_ms), std::to_string(b.peak_alloc)});
    log(method_name(r) + ": " + format_number(b.time_ms) + " ms per batch of " + std::to_string(cfg.bench.batch));
    write_csv(cfg.output_dir / "bench.csv", table);
  }
}

void cmd_correct(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  const fs::path model_path = cfg.model_path.empty() ? cfg.output_dir / "model.scw" : cfg.model_path;
  if (!fs::exists(model_path)) throw IoError("no model at " + model_path.string() + "; run `train` first");
  nn::Net net = nn::read_scw1(model_path);
  const Resolution r = cfg.model_resolution;
  auxnet::InferenceWrapper wrapper(net, r.h, r.w, cfg.train.w_max_mm, cfg.train.h_max_mm);
  const ScatterPredictor predictor = model_predictor(wrapper);
  sim::SimulationConfig sc = cfg.train_sim;
  sc.i0 = cfg.test_i0;
  const fs::path volumes = cfg.output_dir / "volumes";
  fs::create_directories(volumes);
  std::vector<CsvRow> table{{"phantom", "fom_d", "fom_h", "rmse_uncorrected_hu", "rmse_corrected_hu",
                             "rmse_oracle_hu", "uniformity_reference_hu", "uniformity_uncorrected_hu",
                             "uniformity_corrected_hu", "clamped_pixels"}};
  std::vector<CsvRow> profiles{{"phantom", "fom_d", "fom_h", "distance_mm", "reference_hu", "uncorrected_hu",
                                "corrected_hu"}};
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (std::size_t p = 0; p < cfg.test_phantoms.size(); ++p) {
    const std::string& name = cfg.test_phantoms[p];
    const sim::VoxelPhantom phantom = sim::build_phantom(parse_phantom(name), cfg.grid);
    for (const FomSize& fom : cfg.test_foms) {
      CorrectionSettings settings;
      settings.seed = cfg.seed + p;
      settings.water_radius_mm = water_cylinder_radius(name);
      const CorrectionCase c = evaluate_correction(phantom, name, fom, cfg.geometry, sc, predictor, settings);
      table.push_back({name, format_number(fom.diameter_mm), format_number(fom.height_mm),
                       format_number(c.rmse_uncorrected), format_number(c.rmse_corrected),
                       format_number(c.rmse_oracle), opt(c.uniformity_reference), opt(c.uniformity_uncorrected),
                       opt(c.uniformity_corrected), std::to_string(c.clamped_pixels)});
      for (std::size_t i = 0; i < c.profile_reference.size(); ++i) {
        profiles.push_back({name, format_number(fom.diameter_mm), format_number(fom.height_mm),
                            format_number(c.profile_reference[i].distance_mm),
                            format_number(c.profile_reference[i].value), format_number(c.profile_uncorrected[i].value),
                            format_number(c.profile_corrected[i].value)});
      }
      fdk::write_scv1(volumes / ("corrected_p" + std::to_string(p) + "_" + to_string(fom) + ".scv"), c.corrected_hu);
      log(name + " " + to_string(fom) + ": RMSE " + format_number(c.rmse_uncorrected) + " -> " +
          format_number(c.rmse_corrected) + " HU");
    }
  }
  write_csv(cfg.output_dir / "correction.csv", table);
  write_csv(cfg.output_dir / "profiles.csv", profiles);
}

void cmd_recon(const ExperimentConfig& cfg) {
  DirectoryLock lock(cfg.output_dir);
  sim::SimulationConfig sc = cfg.train_sim;
  sc.i0 = cfg.test_i0;
  const fs::path volumes = cfg.output_dir / "volumes";
  fs::create_directories(volumes);
  std::vector<CsvRow> table{{"phantom", "fom_d", "fom_h", "rmse_uncorrected_hu"}};
  for (std::size_t p = 0; p < cfg.test_phantoms.size(); ++p) {
    const std::string& name = cfg.test_phantoms[p];
    const sim::VoxelPhantom phantom = sim::build_phantom(parse_phantom(name), cfg.grid);
    for (const FomSize& fom : cfg.test_foms) {
      const sim::ProjectionSet set = sim::simulate_projections(phantom, cfg.geometry, fom, sc);
      std::vector<Image2D> reference;
      std::vector<Image2D> measured;
      for (std::size_t v = 0; v < set.primary.size(); ++v) {
        Image2D total = set.primary[v];
        for (std::size_t i = 0; i < total.size(); ++i) total.pixels()[i] += set.scatter[v].pixels()[i];
        const auto seed = sim::sample_seed(cfg.seed + p, 0, 0, static_cast<int>(v), 1);
        reference.push_back(prep::linearize(set.primary[v], set.flat, fom, sc.floor).data);
        measured.push_back(prep::linearize(sim::add_poisson_noise(total, seed), set.flat, fom, sc.floor).data);
      }
      const auto ref = fdk::to_hu(fdk::reconstruct(std::span<const Image2D>(reference), cfg.geometry, cfg.grid),
                                  sim::materials::kWater);
      const auto unc = fdk::to_hu(fdk::reconstruct(std::span<const Image2D>(measured), cfg.geometry, cfg.grid),
                                  sim::materials::kWater);
      const std::string stem = "p" + std::to_string(p) + "_" + to_string(fom);
      fdk::write_scv1(volumes / ("reference_" + stem + ".scv"), ref);
      fdk::write_scv1(volumes / ("uncorrected_" + stem + ".scv"), unc);
      table.push_back({name, format_number(fom.diameter_mm), format_number(fom.height_mm),
                       format_number(metrics::rmse(unc.values, ref.values, fom_mask(ref, fom)))});
    }
  }
  write_csv(cfg.output_dir / "recon.csv", table);
}

int run_command(const std::string& name, const fs::path& config_path, const CliOverrides& overrides) {
  try {
    const Config raw = Config::load(config_path);
    const ExperimentConfig cfg = load_experiment(raw, overrides);
    if (name == "simulate") {
      cmd_simulate(cfg);
    } else if (name == "interp-study") {
      cmd_interp_study(cfg);
    } else if (name == "train") {
      cmd_train(cfg);
    } else if (name == "sweep") {
      cmd_sweep(cfg);
    } else if (name == "correct") {
      cmd_correct(cfg);
    } else if (name == "recon") {
      cmd_recon(cfg);
    } else if (name == "bench") {
      cmd_bench(cfg);
    } else {
      throw InvalidArgument("unknown command '" + name + "'");
    }
    return kExitOk;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: invalid configuration: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const IoError& e) {
    std::cerr << "error: I/O failure: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: I/O failure: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace scatterbench::harness
