#pragma once

#include "uasabi/calibration.hpp"
#include "uasabi/config.hpp"
#include "uasabi/inference.hpp"
#include "uasabi/io.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uasabi {

/// y = omega log(x) + sin(0.05 x) + 0.01 x + 1; DomainError for x <= 0.
double logsin_eval(double x, double omega);
SimulatorFn logsin_simulator();

/// Simulator runs on the first n points of the Sobol sequence (origin
/// skipped) scaled onto `box` (x coordinates first, then omega).
SurrogateTrainingSet sobol_design_runs(const SimulatorFn& model, int x_dim,
                                       const std::vector<std::pair<double, double>>& box, int n,
                                       int output = 0);

/// Basis for a surrogate over (x, omega): Legendre on the design box (the
/// data range when none is configured), or aPC families built from the
/// prior of each input.
BasisSpec study_basis(const Config& config, const Eigen::MatrixXd& inputs);
/// Seed of the surrogate MCMC for one output of a study.
std::uint64_t surrogate_seed(std::uint64_t study_seed, int output);
SurrogatePosterior fit_study_surrogate(const Config& config, const SurrogateTrainingSet& data,
                                       std::uint64_t study_seed, int output, int workers);

/// Generator mode of one NPE method; throws ConfigError when the method
/// needs a simulator and none is given.
GeneratorMode method_generator(const std::string& method, const Config& config,
                               const std::vector<SurrogatePosterior>& surrogates,
                               const std::optional<SimulatorFn>& simulator, int y_dim);
bool is_npe_method(const std::string& method);

/// Trains the estimator of one NPE method on the streams a study with the
/// same seed would use.
TrainResult train_method(const std::string& method, const Config& config,
                         const std::vector<SurrogatePosterior>& surrogates,
                         const std::optional<SimulatorFn>& simulator, std::uint64_t seed);

struct MethodOutcome {
  std::string method;
  RankExperiment ranks;
  /// One entry per parameter.
  std::vector<EcdfDifference> ecdf;
  std::vector<RecoverySummary> recovery;
  std::optional<TrainResult> training;
  double seconds = 0.0;
};

struct StudyResult {
  ExperimentManifest manifest;
  /// One posterior per output.
  std::vector<SurrogatePosterior> surrogates;
  std::vector<TrainingItem> truths;
  std::vector<MethodOutcome> methods;

  const MethodOutcome& method(const std::string& name) const;
};

/// Full LogSin protocol: Sobol design, Bayesian PCE, the configured NPE
/// variants and MCMC baselines over n_replications ground truths, rank
/// experiments, recovery summaries. With `out_dir`, every artifact and the
/// manifest are written there; a failing phase writes the manifest of the
/// phases completed so far and rethrows.
StudyResult run_logsin_study(const Config& config, std::uint64_t seed,
                             const std::optional<std::filesystem::path>& out_dir = {});

/// Same pipeline on a user table (config.study.dataset): one aPC or
/// Legendre surrogate per y_* column. Ground truths are the omega groups of
/// config.study.test_dataset; without one only surrogates and estimators
/// are produced. Simulator-trained methods are skipped.
StudyResult run_tabular_study(const Config& config, std::uint64_t seed,
                              const std::optional<std::filesystem::path>& out_dir = {});

/// Groups table rows by identical omega into observation sets.
std::vector<TrainingItem> group_by_omega(const TabularDataset& data);
TabularDataset training_set_to_table(const SurrogateTrainingSet& data, const NamedPrior& prior,
                                     const std::string& y_name = "y_1");

/// Per-set agreement of two posterior samples.
struct PosteriorAgreement {
  Eigen::MatrixXd mean_difference;  // sets x params, |mean_a - mean_b| / sd_b
  Eigen::MatrixXd sd_ratio;         // sets x params, sd_a / sd_b
  double fraction_within(double max_mean_diff, double lo, double hi) const;
};

/// UA-SABI against E-Post on config.study.validation_sets fresh LogSin-style
/// observation sets drawn from the prior predictive of `simulator`.
PosteriorAgreement compare_with_epost(const Config& config, std::uint64_t seed,
                                      const std::vector<SurrogatePosterior>& surrogates,
                                      const NpeModel& ua_model, const SimulatorFn& simulator,
                                      int workers);

struct BreakEvenInputs {
  std::vector<SurrogatePosterior> surrogates;
  NpeModel ua_model;
  double training_seconds = 0.0;
};

struct BreakEvenReport {
  std::vector<int> n_runs;
  Eigen::VectorXd ua_cumulative;
  Eigen::VectorXd epost_cumulative;
  double training_seconds = 0.0;
  /// Per inference run 1..max(n_runs).
  std::vector<double> ua_increments;
  std::vector<double> epost_increments;
  /// Smallest listed n with UA-SABI cumulative <= E-Post cumulative.
  std::optional<int> crossing;
  double epost_slope = 0.0;
  double epost_intercept = 0.0;
  double epost_r2 = 0.0;
  int workers = 1;
  std::vector<std::string> warnings;
};

/// Wall-clock comparison on the LogSin problem. Without `prepared` the
/// surrogate is fitted and the UA-SABI estimator trained in-run.
BreakEvenReport run_breakeven(const Config& config, std::uint64_t seed, const std::vector<int>& n_runs,
                              int workers, const BreakEvenInputs* prepared = nullptr);
void write_breakeven_csv(const std::filesystem::path& path, const BreakEvenReport& report);
BreakEvenReport read_breakeven_csv(const std::filesystem::path& path);

/// SVG renderings; output depends only on the inputs.
std::string ecdf_svg(const std::string& method, const std::string& parameter, const EcdfDifference& curve);
std::string recovery_svg(const std::string& method, const std::string& parameter,
                         const RecoverySummary& summary);
std::string runtime_svg(const BreakEvenReport& report);

/// Renders every verdict_<method>.json in `study_dir` (with its rank and
/// recovery CSVs) and breakeven.csv if present into `out_dir`: one ECDF and
/// one recovery SVG per method and parameter. Throws IoError for a missing
/// artifact and InsufficientData when there is no verdict to plot.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& study_dir,
                                              const std::filesystem::path& out_dir);

}  // namespace uasabi
