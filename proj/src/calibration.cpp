#include "uasabi/calibration.hpp"

#include "uasabi/error.hpp"
#include "uasabi/surrogate.hpp"

#include <algorithm>
#include <cmath>

namespace uasabi {
namespace {

void ecdf_on_grid(std::vector<double>& u, const Eigen::VectorXd& grid, Eigen::VectorXd& diff) {
  std::sort(u.begin(), u.end());
  const auto n = static_cast<double>(u.size());
  diff.resize(grid.size());
  std::size_t j = 0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    while (j < u.size() && u[j] <= grid(k)) ++j;
    diff(k) = static_cast<double>(j) / n - grid(k);
  }
}

double fractional(int rank, int L) { return (rank + 0.5) / (L + 1.0); }

}  // namespace

int sbc_rank(double truth, const Eigen::Ref<const Eigen::VectorXd>& draws, RngStream& rng) {
  if (draws.size() == 0) throw EmptyPosterior("sbc_rank: no draws");
  int rank = 0;
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    if (draws(i) < truth) ++rank;
    else if (draws(i) == truth && rng.uniform() < 0.5) ++rank;
  }
  return rank;
}

EcdfBand simultaneous_band(int n_ranks, int L, double level, RngStream& rng, int n_sim) {
  if (n_ranks < 20) throw InsufficientData("ECDF band needs at least 20 ranks, got " + std::to_string(n_ranks));
  if (L < 1) throw InvalidParameter("ECDF band: L must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw InvalidParameter("ECDF band: level must lie in (0, 1)");
  if (n_sim < 100) throw InvalidParameter("ECDF band: at least 100 simulations required");
  EcdfBand b = band_with_half_width(n_ranks, L, level, 0.0);
  const Eigen::ArrayXd w = (b.grid.array() * (1.0 - b.grid.array())).sqrt();

  std::vector<double> sup(static_cast<std::size_t>(n_sim));
  std::vector<double> u(static_cast<std::size_t>(n_ranks));
  Eigen::VectorXd diff;
  for (int s = 0; s < n_sim; ++s) {
    for (auto& v : u) v = fractional(static_cast<int>(rng.below(static_cast<std::uint64_t>(L) + 1)), L);
    ecdf_on_grid(u, b.grid, diff);
    sup[static_cast<std::size_t>(s)] = (diff.array().abs() / w).maxCoeff();
  }
  std::sort(sup.begin(), sup.end());
  const auto idx = static_cast<std::size_t>(std::ceil(level * n_sim)) - 1;
  b.half_width = sup[std::min(idx, sup.size() - 1)];
  b.upper = (b.half_width * w).matrix();
  b.lower = -b.upper;
  return b;
}

EcdfBand band_with_half_width(int n_ranks, int L, double level, double half_width) {
  if (n_ranks < 1 || L < 1) throw InvalidParameter("ECDF band: n_ranks and L must be >= 1");
  EcdfBand b;
  b.n_ranks = n_ranks;
  b.L = L;
  b.level = level;
  const int k = std::min(n_ranks, 100);
  b.grid = Eigen::VectorXd::LinSpaced(k, 1.0, k) / (k + 1.0);
  b.half_width = half_width;
  b.upper = half_width * (b.grid.array() * (1.0 - b.grid.array())).sqrt().matrix();
  b.lower = -b.upper;
  return b;
}

EcdfDifference ecdf_difference(const std::vector<int>& ranks, const EcdfBand& band) {
  if (static_cast<int>(ranks.size()) != band.n_ranks)
    throw DimensionMismatch("ecdf_difference: band was built for " + std::to_string(band.n_ranks) +
                            " ranks, got " + std::to_string(ranks.size()));
  std::vector<double> u;
  u.reserve(ranks.size());
  for (int r : ranks) {
    if (r < 0 || r > band.L) throw InvalidParameter("ecdf_difference: rank outside [0, L]");
    u.push_back(fractional(r, band.L));
  }
  EcdfDifference out;
  out.band = band;
  ecdf_on_grid(u, band.grid, out.difference);
  for (Eigen::Index k = 0; k < band.grid.size(); ++k) {
    const double excess = std::abs(out.difference(k)) / band.upper(k);
    out.max_excess = std::max(out.max_excess, excess);
    if (out.difference(k) > band.upper(k) || out.difference(k) < band.lower(k)) out.inside = false;
  }
  return out;
}

EcdfDifference ecdf_difference_band(const std::vector<int>& ranks, int L, double level, RngStream& rng,
                                    int n_sim) {
  return ecdf_difference(ranks, simultaneous_band(static_cast<int>(ranks.size()), L, level, rng, n_sim));
}

RecoverySummary recovery_stats(const Eigen::VectorXd& truths,
                               const std::vector<Eigen::VectorXd>& posteriors) {
  if (static_cast<std::size_t>(truths.size()) != posteriors.size())
    throw DimensionMismatch("recovery_stats: " + std::to_string(truths.size()) + " truths but " +
                            std::to_string(posteriors.size()) + " posteriors");
  RecoverySummary s;
  s.truth = truths;
  s.median.resize(truths.size());
  s.deviation.resize(truths.size());
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const auto& d = posteriors[i];
    const double m = median(std::vector<double>(d.data(), d.data() + d.size()));
    std::vector<double> dev(static_cast<std::size_t>(d.size()));
    for (Eigen::Index j = 0; j < d.size(); ++j) dev[static_cast<std::size_t>(j)] = std::abs(d(j) - m);
    s.median(static_cast<Eigen::Index>(i)) = m;
    s.deviation(static_cast<Eigen::Index>(i)) = median(std::move(dev));
  }
  return s;
}

void RankExperiment::validate() const {
  if (static_cast<int>(ranks.size()) != n_params())
    throw DimensionMismatch("rank experiment: one rank vector per parameter required");
  for (const auto& r : ranks) {
    if (static_cast<int>(r.size()) != n_replications())
      throw DimensionMismatch("rank experiment: rank count differs from replication count");
    for (int v : r)
      if (v < 0 || v > L) throw InvalidParameter("rank experiment: rank outside [0, L]");
  }
}

}  // namespace uasabi
