#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scatterbench/auxnet.hpp"
#include "scatterbench/dataset.hpp"
#include "scatterbench/fdk.hpp"
#include "scatterbench/geometry.hpp"
#include "scatterbench/harness/config.hpp"
#include "scatterbench/harness/csv.hpp"
#include "scatterbench/metrics.hpp"
#include "scatterbench/nn/net.hpp"
#include "scatterbench/resample.hpp"
#include "scatterbench/sim.hpp"

namespace scatterbench::harness {

struct Resolution {
  std::size_t h = 0;
  std::size_t w = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// "40x32" -> {40, 32}
Resolution parse_resolution(std::string_view text);
std::string to_string(const Resolution& r);
/// "130x40" -> diameter 130 mm, height 40 mm
FomSize parse_fom(std::string_view text);
std::string to_string(const FomSize& f);

/// Phantom presets: "water:R", "pmma:R", "sedentex:R", "ellipsoid:AX:AY:AZ" (mm).
sim::PhantomSpec parse_phantom(std::string_view text);
/// Radius of a "water:R" preset, used for uniformity ROIs.
std::optional<double> water_cylinder_radius(std::string_view text);

std::vector<FomSize> full_train_foms();
std::vector<FomSize> full_test_foms();
std::vector<FomSize> desk_train_foms();
std::vector<FomSize> desk_test_foms();
std::vector<Resolution> default_resolutions();

struct BenchSettings {
  std::size_t batch = 64;
  int warmup = 10;
  int passes = 100;
  // Fraction dropped from each end before averaging.
  double trim = 0.1;
  Resolution input{320, 256};
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "scatterbench-out";
  ScanGeometry geometry = ScanGeometry::desk_scale();
  sim::VoxelGrid grid;
  sim::SimulationConfig train_sim;
  double test_i0 = 25000.0;
  int train_views = 8;
  int test_eval_views = 4;
  int noise_levels = 1;
  std::vector<std::string> train_phantoms{"water:35", "sedentex:55", "ellipsoid:60:42:50"};
  std::vector<std::string> test_phantoms{"water:60", "sedentex:50"};
  std::vector<FomSize> train_foms = desk_train_foms();
  std::vector<FomSize> test_foms = desk_test_foms();
  std::vector<Resolution> resolutions = default_resolutions();
  Resolution model_resolution{40, 32};
  int base_channels = 16;
  auxnet::TrainConfig train;
  int interp_corpus = 200;
  std::vector<int> interp_factors{2, 4, 8, 16, 32};
  std::vector<resample::Method> interp_methods;
  BenchSettings bench;
  metrics::MapeMode mape_mode = metrics::MapeMode::SumNormalized;
  std::filesystem::path model_path;
  std::uint64_t seed = 1;
};

struct CliOverrides {
  bool full = false;
  std::optional<int> folds;
  std::optional<std::uint64_t> seed;
};

/// Reads every documented key; unknown keys are rejected with InvalidArgument.
ExperimentConfig load_experiment(const Config& cfg, const CliOverrides& overrides = {});

std::vector<sim::VoxelPhantom> build_phantoms(std::span<const std::string> presets, const sim::VoxelGrid& grid);

/// The scan geometry with `views` views over the same arc.
ScanGeometry with_views(const ScanGeometry& geom, int views);

/// In-memory samples for the given views (all views when empty) at one noise level.
std::vector<sim::ScatterSample> simulate_samples(std::span<const sim::VoxelPhantom> phantoms, const ScanGeometry& geom,
                                                 std::span<const FomSize> foms, std::span<const int> views,
                                                 int noise_level, const sim::SimulationConfig& cfg);

/// Flat-normalized scatter images (S / F) of the training phantoms and FOMs,
/// bicubic-resized to `base`, `count` images in total.
std::vector<Image2D> scatter_corpus(const ExperimentConfig& cfg, std::size_t count, Resolution base = {320, 256});

struct InterpRow {
  resample::Method method;
  int factor = 1;
  double mean_mse = 0.0;
  // mean_mse divided by the same method's value at the smallest factor above 1
  double normalized_mse = 0.0;
};
std::vector<InterpRow> run_interp_study(std::span<const Image2D> corpus, std::span<const int> factors,
                                        std::span<const resample::Method> methods);
std::vector<CsvRow> interp_table(std::span<const InterpRow> rows);

double trimmed_mean(std::vector<double> samples, double trim);

struct BenchResult {
  Resolution resolution;
  int blocks = 0;
  nn::CostReport cost;
  double time_ms = 0.0;
  std::size_t peak_alloc = 0;
};

/// Wrapped inference (down, net, up) on a batch of `input`-sized images.
BenchResult benchmark_wrapped(nn::Net& net, Resolution native, const BenchSettings& settings);

/// Scatter estimate in the NormalizedScatter encoding for each input.
using ScatterPredictor =
    std::function<std::vector<Image2D>(std::span<const Image2D> inputs, std::span<const FomSize> foms)>;

ScatterPredictor model_predictor(auxnet::InferenceWrapper& wrapper, std::size_t chunk = 16);

struct CorrectionCase {
  std::string phantom;
  FomSize fom;
  double rmse_uncorrected = 0.0;
  double rmse_corrected = 0.0;
  double rmse_oracle = 0.0;
  std::optional<double> uniformity_reference;
  std::optional<double> uniformity_uncorrected;
  std::optional<double> uniformity_corrected;
  std::size_t clamped_pixels = 0;
  std::vector<metrics::ProfilePoint> profile_reference;
  std::vector<metrics::ProfilePoint> profile_uncorrected;
  std::vector<metrics::ProfilePoint> profile_corrected;
  fdk::Volume corrected_hu;
};

struct CorrectionSettings {
  bool noisy_input = true;
  std::uint64_t seed = 1;
  // ROI layout for water cylinders; absent for other phantoms.
  std::optional<double> water_radius_mm;
};

/// Simulates one test scan, reconstructs the scatter-free reference, the uncorrected
/// scan, the predictor-corrected scan and the perfect-oracle correction (noiseless input,
/// true scatter), and reports HU RMSE inside the FOM cylinder.
CorrectionCase evaluate_correction(const sim::VoxelPhantom& phantom, const std::string& name, const FomSize& fom,
                                   const ScanGeometry& geom, const sim::SimulationConfig& sim_cfg,
                                   const ScatterPredictor& predictor, const CorrectionSettings& settings);

/// Voxels of the reconstruction grid inside the FOM cylinder.
std::vector<std::uint8_t> fom_mask(const fdk::Volume& v, const FomSize& fom);

// Exit codes shared by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

/// Runs a named command; exceptions are reported on stderr and mapped to exit codes.
int run_command(const std::string& name, const std::filesystem::path& config_path, const CliOverrides& overrides);

void cmd_simulate(const ExperimentConfig& cfg);
void cmd_interp_study(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_sweep(const ExperimentConfig& cfg);
void cmd_correct(const ExperimentConfig& cfg);
void cmd_recon(const ExperimentConfig& cfg);
void cmd_bench(const ExperimentConfig& cfg);

}  // namespace scatterbench::harness
