#pragma once

#include "uasabi/numerics.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace uasabi {

/// Number of draws strictly below `truth`; each draw equal to it counts as
/// below with probability 1/2 (decided by `rng`).
int sbc_rank(double truth, const Eigen::Ref<const Eigen::VectorXd>& draws, RngStream& rng);

/// Simultaneous band for the rank ECDF difference: |ecdf(z) - z| <=
/// half_width * sqrt(z (1 - z)) on the evaluation grid.
struct EcdfBand {
  int n_ranks = 0;
  int L = 0;
  double level = 0.95;
  /// Evaluation grid z_k = k / (K + 1), K = min(n_ranks, 100).
  Eigen::VectorXd grid;
  double half_width = 0.0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Monte Carlo band: `n_sim` synthetic uniform rank sets of the same size;
/// the half width is the `level` quantile of their scaled sup-norm.
EcdfBand simultaneous_band(int n_ranks, int L, double level, RngStream& rng, int n_sim = 10000);
/// Band with a known half width, e.g. one read back from a verdict file.
EcdfBand band_with_half_width(int n_ranks, int L, double level, double half_width);

struct EcdfDifference {
  EcdfBand band;
  /// ecdf(z) - z of the fractional ranks (r + 1/2) / (L + 1) on band.grid.
  Eigen::VectorXd difference;
  bool inside = true;
  /// Largest |difference| relative to the band edge (> 1 means outside).
  double max_excess = 0.0;
};

EcdfDifference ecdf_difference(const std::vector<int>& ranks, const EcdfBand& band);
EcdfDifference ecdf_difference_band(const std::vector<int>& ranks, int L, double level, RngStream& rng,
                                    int n_sim = 10000);

struct RecoverySummary {
  Eigen::VectorXd truth;
  Eigen::VectorXd median;
  /// Median absolute deviation about the median.
  Eigen::VectorXd deviation;
};

RecoverySummary recovery_stats(const Eigen::VectorXd& truths,
                               const std::vector<Eigen::VectorXd>& posteriors);

/// Ranks of one method: ranks[p][i] for parameter p and replication i.
struct RankExperiment {
  std::string method;
  int L = 0;
  double level = 0.95;
  Eigen::MatrixXd truths;  // replications x parameters
  std::vector<std::vector<int>> ranks;

  int n_replications() const { return static_cast<int>(truths.rows()); }
  int n_params() const { return static_cast<int>(truths.cols()); }
  void validate() const;
};

}  // namespace uasabi
