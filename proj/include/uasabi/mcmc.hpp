#pragma once

#include "uasabi/numerics.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace uasabi {

/// Unnormalized log density on an unconstrained space. `log_density_grad`
/// returns log p(q) and writes its gradient into `grad`.
struct TargetDensity {
  int dim = 0;
  std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>
      log_density_grad;
  /// Optional initializer; defaults to Uniform(-2, 2) per coordinate.
  std::function<Eigen::VectorXd(RngStream&)> initial_point;
  std::vector<std::string> names;

  double log_density(const Eigen::VectorXd& q) const {
    Eigen::VectorXd g(dim);
    return log_density_grad(q, g);
  }
};

struct McmcConfig {
  int n_chains = 4;
  int n_warmup = 1000;
  /// Retained draws per chain; the chain runs n_draws * thin iterations.
  int n_draws = 1000;
  int thin = 1;
  /// Upper bound L; each iteration draws its path length uniformly in [1, L].
  int leapfrog_steps = 10;
  double target_accept = 0.8;
  std::uint64_t seed = 0;
  /// 0 resolves through UASABI_WORKERS.
  int workers = 0;
};

struct ChainOutput {
  /// draws[chain] is n_draws x dim.
  std::vector<Eigen::MatrixXd> draws;
  Eigen::VectorXd accept_rate;
  Eigen::VectorXd step_size;
  std::vector<int> divergences;
  /// Per coordinate; NaN when fewer than 2 chains or 4 draws.
  Eigen::VectorXd rhat;
  Eigen::VectorXd ess;
  std::vector<std::string> warnings;

  int dim() const { return draws.empty() ? 0 : static_cast<int>(draws[0].cols()); }
  /// All chains stacked chain-major into (chains * n_draws) x dim.
  Eigen::MatrixXd pooled() const;
  /// Coordinate k as [chain][iteration].
  std::vector<Eigen::VectorXd> coordinate(int k) const;
};

/// Dual-averaging step-size adaptation (gamma 0.05, t0 10, kappa 0.75).
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target_accept);
  void restart(double step);
  /// Feed one acceptance statistic; returns the next step size.
  double update(double accept_prob);
  double final_step() const;

 private:
  double mu_ = 0.0;
  double delta_;
  double hbar_ = 0.0;
  double log_step_ = 0.0;
  double log_step_bar_ = 0.0;
  int t_ = 0;
};

/// Hamiltonian Monte Carlo with jittered path length, dual-averaging step
/// size and windowed diagonal mass-matrix estimation during warmup. Chains
/// run in parallel, each on RngStream(seed, 0).child(chain), so results do
/// not depend on the worker count.
ChainOutput hmc_sample(const TargetDensity& target, const McmcConfig& config);

/// Single chain, used directly by per-draw baselines that run many tiny
/// samplers. Returns n_draws x dim.
Eigen::MatrixXd hmc_chain(const TargetDensity& target, const McmcConfig& config,
                          RngStream rng, double* accept_rate = nullptr,
                          double* step_size = nullptr, int* divergences = nullptr);

/// Rank-normalized split R-hat (max of bulk and folded), draws [chain][iter].
double rhat(const std::vector<Eigen::VectorXd>& chains);
/// Classic Gelman-Rubin potential scale reduction without rank normalization.
double basic_rhat(const std::vector<Eigen::VectorXd>& chains, bool split);
/// Bulk effective sample size (rank-normalized split chains, Geyer initial
/// monotone sequence). NaN for zero-variance input.
double ess(const std::vector<Eigen::VectorXd>& chains);
/// Effective sample size of the raw draws without splitting or ranking.
double ess_basic(const std::vector<Eigen::VectorXd>& chains);

/// Central finite-difference check of a target's gradient; returns the worst
/// relative error over the given points.
double gradient_check(const TargetDensity& target, const Eigen::MatrixXd& points,
                      double h = 1e-5);

}  // namespace uasabi
