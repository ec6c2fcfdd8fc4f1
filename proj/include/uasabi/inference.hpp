#pragma once

#include "uasabi/mcmc.hpp"
#include "uasabi/neural.hpp"
#include "uasabi/numerics.hpp"
#include "uasabi/polychaos.hpp"
#include "uasabi/surrogate.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace uasabi {

/// Independent priors on the inputs x and the parameters omega.
struct PriorSpec {
  std::vector<DistributionSpec> x_prior;
  std::vector<DistributionSpec> omega_prior;

  int x_dim() const { return static_cast<int>(x_prior.size()); }
  int param_dim() const { return static_cast<int>(omega_prior.size()); }
  void validate() const;

  Eigen::VectorXd sample_x(RngStream& rng) const;
  Eigen::VectorXd sample_omega(RngStream& rng) const;
  double log_prior(const Eigen::VectorXd& omega) const;
};

/// y = M(x, omega); returns one entry per output.
using SimulatorFn =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& omega)>;

struct SimulatorSource {
  SimulatorFn model;
  int y_dim = 1;
};

/// Outputs from fixed surrogate coefficients, one model per output.
struct PointSurrogateSource {
  std::vector<PceModel> models;
};

/// Outputs from surrogate posterior draws plus approximation error, one
/// posterior per output.
struct UncertaintyAwareSource {
  std::vector<SurrogatePosterior> posteriors;
};

using GeneratorSource = std::variant<SimulatorSource, PointSurrogateSource, UncertaintyAwareSource>;

struct GeneratorMode {
  GeneratorSource source;
  int observations_per_set = 4;
  /// Online draws fresh items for every batch; offline cycles a pool of
  /// `budget` items generated once.
  bool online = true;
  /// Maximum number of generated items (required offline).
  std::optional<long> budget;

  int y_dim() const;
  std::string name() const;
};

struct TrainingItem {
  ObservationSet set;
  Eigen::VectorXd omega;
};

/// Draws omega once and x per element, then y from the mode's source. The
/// uncertainty-aware source picks one surrogate draw per item, shared by all
/// of its elements.
TrainingItem generate_training_item(const GeneratorMode& mode, const PriorSpec& prior,
                                    RngStream& rng);

/// Stateful wrapper that enforces the item budget.
class TrainingGenerator {
 public:
  TrainingGenerator(GeneratorMode mode, PriorSpec prior);
  TrainingItem next(RngStream& rng);
  long generated() const { return generated_; }
  const GeneratorMode& mode() const { return mode_; }

 private:
  GeneratorMode mode_;
  PriorSpec prior_;
  long generated_ = 0;
};

struct TrainSchedule {
  int epochs = 100;
  int batches_per_epoch = 128;
  int batch_size = 64;
  double learning_rate = 5e-4;
  double lr_alpha = 1e-6;
  int calibration_size = 4096;

  long total_steps() const { return long{epochs} * batches_per_epoch; }
  void validate() const;
};

struct TrainResult {
  NpeModel model;
  /// Loss at every optimizer step.
  std::vector<double> loss_trace;
  double wall_seconds = 0.0;

  /// Mean loss of one epoch.
  double epoch_loss(int epoch) const;
};

/// Computes standardization statistics from a calibration batch of items.
Standardization compute_standardization(const std::vector<TrainingItem>& items);

/// Minimizes the batch mean of -log q(omega | S(set)) with Adam and a cosine
/// schedule. Single-threaded and deterministic for a given seed.
TrainResult train_npe(const GeneratorMode& mode, const PriorSpec& prior, const NpeModel& init,
                      const TrainSchedule& schedule, RngStream rng);

/// n_draws i.i.d. draws (rows) from the amortized posterior.
Eigen::MatrixXd npe_posterior(const NpeModel& model, const ObservationSet& obs, Eigen::Index n_draws,
                              RngStream& rng);

/// Likelihood target over omega for fixed surrogate coefficients: log p(omega)
/// + sum_j sum_o log N(y_jo | M_o(x_j, omega), sigma_o). Sampled on an
/// unconstrained scale (log / logit maps for bounded priors).
class SurrogateLikelihood {
 public:
  SurrogateLikelihood(const std::vector<BasisSpec>& bases, const std::vector<MultiIndexSet>& sets,
                      const PriorSpec& prior, const ObservationSet& obs);
  void set_coefficients(const std::vector<Eigen::VectorXd>& coefficients,
                        const std::vector<double>& sigmas);
  /// Log density and gradient on the unconstrained scale.
  double log_density_grad(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const;
  TargetDensity target() const;
  /// Maps between omega and the unconstrained scale.
  Eigen::VectorXd to_unconstrained(const Eigen::VectorXd& omega) const;
  Eigen::VectorXd from_unconstrained(const Eigen::VectorXd& u) const;

 private:
  PriorSpec prior_;
  Eigen::MatrixXd y_;
  std::vector<ReducedPce> reduced_;
  std::vector<double> sigmas_;
};

/// HMC posterior of omega against the point surrogate with fixed sigma per
/// output. Draws are pooled chain-major (rows) in omega units.
struct PointMcmcResult {
  Eigen::MatrixXd draws;
  ChainOutput chains;
  std::vector<double> sigma_fixed;
};

PointMcmcResult point_mcmc_posterior(const std::vector<PceModel>& models,
                                     const std::vector<double>& sigma_fixed,
                                     const PriorSpec& prior, const ObservationSet& obs,
                                     const McmcConfig& mcmc);

struct EPostConfig {
  int n_warmup = 1000;
  int n_draws = 4;
  int leapfrog_steps = 10;
  double target_accept = 0.8;
  std::uint64_t seed = 0;
  /// 0 resolves through UASABI_WORKERS.
  int workers = 0;
  /// Use only the first n surrogate draws (all when unset).
  std::optional<Eigen::Index> max_surrogate_draws;
  double max_failure_fraction = 0.05;
};

struct EPostResult {
  /// Pooled in surrogate-draw order, n_draws rows per surrogate draw.
  Eigen::MatrixXd draws;
  Eigen::Index n_runs = 0;
  Eigen::Index n_failed = 0;
  std::vector<std::string> failures;
};

/// One short MCMC per surrogate draw (c, sigma), pooled. Draw i of every
/// output posterior forms surrogate sample i. Results do not depend on the
/// worker count.
EPostResult epost_posterior(const std::vector<SurrogatePosterior>& posteriors,
                            const PriorSpec& prior, const ObservationSet& obs,
                            const EPostConfig& config);

}  // namespace uasabi
