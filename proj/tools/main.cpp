#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "scatterbench/harness/commands.hpp"

namespace sh = scatterbench::harness;

int main(int argc, char** argv) {
  CLI::App app{"Simulation, training and benchmarking harness for CBCT scatter estimation"};
  app.require_subcommand(1);

  std::string config_path;
  sh::CliOverrides overrides;
  int folds = 0;
  std::uint64_t seed = 0;

  const char* commands[][2] = {
      {"simulate", "Simulate the training dataset"},
      {"interp-study", "Down-up interpolation error of flat-normalized scatter"},
      {"train", "Train the scatter network at model.resolution"},
      {"sweep", "Train and evaluate one network per input resolution"},
      {"correct", "Scatter-correct and reconstruct the test scans"},
      {"recon", "Reconstruct reference and uncorrected test volumes"},
      {"bench", "Time wrapped inference at each input resolution"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_flag("--full", overrides.full, "Use the full FOM grids");
    sub->add_option("--folds", folds, "Cross-validation folds")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Random seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return sh::kExitInvalidConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--folds") > 0) overrides.folds = folds;
  if (chosen->count("--seed") > 0) overrides.seed = seed;
  return sh::run_command(chosen->get_name(), config_path, overrides);
}
