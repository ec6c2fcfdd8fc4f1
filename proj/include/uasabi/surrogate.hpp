#pragma once

#include "uasabi/mcmc.hpp"
#include "uasabi/numerics.hpp"
#include "uasabi/polychaos.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace uasabi {

/// Sparse simulator runs D_T. Row i of `inputs` is (x_i, omega_i) with the
/// first `x_dim` columns holding x.
struct SurrogateTrainingSet {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd y;
  int x_dim = 0;

  Eigen::Index size() const { return y.size(); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  void validate() const;
  /// FNV-1a over the raw values; identifies the data in provenance.
  std::uint64_t digest() const;
};

struct SurrogatePrior {
  DistributionSpec coef_prior = DistributionSpec::normal(0.0, 5.0);
  DistributionSpec sigma_prior = DistributionSpec::half_normal(0.5);
  /// Point-mass sigma: sigma is held at this value and not sampled.
  std::optional<double> fixed_sigma;
};

struct SurrogateProvenance {
  std::uint64_t seed = 0;
  McmcConfig mcmc;
  std::uint64_t data_digest = 0;
  Eigen::Index n_train = 0;
  Eigen::VectorXd rhat;
  Eigen::VectorXd ess;
  Eigen::VectorXd accept_rate;
  double design_condition = 0.0;
  std::vector<std::string> warnings;
};

/// Joint draws of (c, sigma). Row i holds c_0..c_{K-1} followed by sigma.
struct SurrogatePosterior {
  BasisSpec basis;
  MultiIndexSet index_set;
  int x_dim = 0;
  SurrogatePrior prior;
  Eigen::MatrixXd draws;
  SurrogateProvenance provenance;

  Eigen::Index n_draws() const { return draws.rows(); }
  Eigen::Index n_coefficients() const { return draws.cols() - 1; }
  Eigen::VectorXd coefficients(Eigen::Index i) const {
    return draws.row(i).head(n_coefficients()).transpose();
  }
  double sigma(Eigen::Index i) const { return draws(i, draws.cols() - 1); }
  PceModel model(Eigen::Index i) const {
    return PceModel(basis, index_set, coefficients(i));
  }
  void validate() const;
};

struct SurrogateLogPosterior {
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  /// log sigma, from sampling on the log scale.
  double log_jacobian = 0.0;
  /// d/d(c, log sigma) of the total.
  Eigen::VectorXd gradient;
  double total() const { return log_likelihood + log_prior + log_jacobian; }
};

/// i.i.d. normal likelihood of the training outputs around the PCE plus the
/// coefficient and sigma priors, with gradient in (c, log sigma).
SurrogateLogPosterior surrogate_log_posterior(const Eigen::VectorXd& c, double sigma,
                                              const SurrogateTrainingSet& data,
                                              const BasisSpec& basis,
                                              const MultiIndexSet& set,
                                              const SurrogatePrior& prior);

/// HMC target over (c, log sigma), or over c alone when sigma is fixed. The
/// design matrix is evaluated once and captured.
TargetDensity surrogate_target(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                               const SurrogatePrior& prior);

struct FitOptions {
  double rhat_threshold = 1.01;
  bool allow_unconverged = false;
};

SurrogatePosterior fit_surrogate(const SurrogateTrainingSet& data, const BasisSpec& basis,
                                 const MultiIndexSet& set, const SurrogatePrior& prior,
                                 const McmcConfig& mcmc, const FitOptions& options = {});

/// Coordinate-wise median of the coefficient draws (mean of the middle pair
/// for even counts).
PceModel point_surrogate(const SurrogatePosterior& posterior);
/// Median of the sigma draws.
double median_sigma(const SurrogatePosterior& posterior);

/// M_c(x, omega) + eps, eps ~ N(0, sigma).
double sample_error_adjusted(const PceModel& draw_model, double sigma,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& omega,
                             RngStream& rng);
double sample_error_adjusted(const SurrogatePosterior& posterior, Eigen::Index draw,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& omega,
                             RngStream& rng);

/// Median with the mean-of-middle-pair convention.
double median(std::vector<double> values);

}  // namespace uasabi
