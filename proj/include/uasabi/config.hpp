#pragma once

#include "uasabi/inference.hpp"
#include "uasabi/surrogate.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace uasabi {

/// Prior plus the column names it binds to (x_*, omega_*).
struct NamedPrior {
  PriorSpec spec;
  std::vector<std::string> x_names;
  std::vector<std::string> omega_names;
};

struct SurrogateSettings {
  /// "legendre" or "apc".
  std::string basis = "legendre";
  int degree = 3;
  /// Size of the Sobol design when the study generates its own runs.
  int n_train = 16;
  /// Per input (x then omega); empty derives the box from the data.
  std::vector<std::pair<double, double>> design_box;
  SurrogatePrior prior;
  FitOptions fit;
  std::uint64_t apc_mc_seed = 0x5eed;
};

struct NpeSettings {
  TrainSchedule schedule;
  NpeArchitecture architecture;
  int observations_per_set = 4;
  /// Offline pool size of the low-budget simulator-trained estimator.
  long low_budget = 64;
};

struct McmcSettings {
  McmcConfig surrogate;
  McmcConfig point;
  EPostConfig epost;
};

struct StudySettings {
  int n_replications = 200;
  int posterior_draws = 4000;
  double band_level = 0.95;
  int band_simulations = 10000;
  std::vector<std::string> methods{"full-abi", "low-abi", "sabi", "ua-sabi", "point", "epost"};
  /// 0 resolves through UASABI_WORKERS.
  int workers = 0;
  std::vector<int> breakeven_runs{0, 1, 2, 4, 6, 8, 10, 12, 16, 20, 24};
  int validation_sets = 20;
  /// Simulator table for the tabular study, and an optional held-out table
  /// whose rows (grouped by omega) serve as ground truths.
  std::string dataset;
  std::string test_dataset;
};

/// The single JSON document every CLI command reads. Seeds are not part of
/// it; they are derived from the study seed.
struct Config {
  NamedPrior prior;
  SurrogateSettings surrogate;
  NpeSettings npe;
  McmcSettings mcmc;
  StudySettings study;

  void validate() const;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"full-abi", "low-abi", "sabi", "ua-sabi", "point", "epost"};
  return m;
}

/// Defaults for the LogSin study: x ~ U(1, 200), omega ~ N(1, 0.2), 16-run
/// Sobol design on [1, 200] x [0.6, 1.4], degree-3 Legendre surrogate.
Config logsin_config();

/// Overlays `text` on the LogSin defaults. Unknown keys, wrong types and
/// invalid values raise ConfigError naming the offending path.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
/// Complete document; parse_config(config_to_json(c)) reproduces c.
std::string config_to_json(const Config& config);

}  // namespace uasabi
