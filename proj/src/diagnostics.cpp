#include "uasabi/error.hpp"
#include "uasabi/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uasabi {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2)
    throw InsufficientChains("diagnostics require at least 2 chains, got " +
                             std::to_string(chains.size()));
  const Eigen::Index n = chains[0].size();
  if (n < 4) throw InsufficientData("diagnostics require at least 4 iterations");
  for (const auto& c : chains)
    if (c.size() != n) throw DimensionMismatch("chains differ in length");
}

std::vector<Eigen::VectorXd> split(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  const Eigen::Index half = chains[0].size() / 2;
  const Eigen::Index n = chains[0].size();
  for (const auto& c : chains) {
    out.emplace_back(c.head(half));
    out.emplace_back(c.segment(n - half, half));
  }
  return out;
}

/// Blom-style normal scores of pooled average ranks.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  const Eigen::Index n = chains[0].size();
  const std::size_t total = chains.size() * static_cast<std::size_t>(n);
  std::vector<std::pair<double, std::size_t>> v;
  v.reserve(total);
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      v.emplace_back(chains[c](i), c * static_cast<std::size_t>(n) + static_cast<std::size_t>(i));
  std::sort(v.begin(), v.end());
  std::vector<double> rank(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && v[j + 1].first == v[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[v[k].second] = avg;
    i = j + 1;
  }
  std::vector<Eigen::VectorXd> out(chains.size(), Eigen::VectorXd(n));
  const double s = static_cast<double>(total);
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      out[c](i) = normal_quantile((rank[c * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] - 0.375) / (s + 0.25));
  return out;
}

double psrf(const std::vector<Eigen::VectorXd>& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains[0].size());
  Eigen::VectorXd means(chains.size()), vars(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const double mu = chains[c].mean();
    means(static_cast<Eigen::Index>(c)) = mu;
    vars(static_cast<Eigen::Index>(c)) =
        (chains[c].array() - mu).square().sum() / (n - 1.0);
  }
  const double grand = means.mean();
  const double b = n * (means.array() - grand).square().sum() / (m - 1.0);
  const double w = vars.mean();
  if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : kNaN;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

bool all_identical(const std::vector<Eigen::VectorXd>& chains) {
  const double v0 = chains[0](0);
  for (const auto& c : chains)
    if ((c.array() != v0).any()) return false;
  return true;
}

/// Biased autocovariance for lags 0..n-1.
Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::VectorXd c = x.array() - x.mean();
  Eigen::VectorXd acov(n);
  for (Eigen::Index t = 0; t < n; ++t)
    acov(t) = c.head(n - t).dot(c.tail(n - t)) / static_cast<double>(n);
  return acov;
}

double geyer_ess(const std::vector<Eigen::VectorXd>& chains) {
  const std::size_t m = chains.size();
  const Eigen::Index n = chains[0].size();
  std::vector<Eigen::VectorXd> acov;
  Eigen::VectorXd means(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    acov.push_back(autocovariance(chains[c]));
    means(static_cast<Eigen::Index>(c)) = chains[c].mean();
    chain_var(static_cast<Eigen::Index>(c)) = acov.back()(0) * n / (n - 1.0);
  }
  const double mean_var = chain_var.mean();
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) {
    const double g = means.mean();
    var_plus += (means.array() - g).square().sum() / (m - 1.0);
  }
  if (!(var_plus > 0.0)) return kNaN;

  auto mean_acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (const auto& a : acov) s += a(t);
    return s / static_cast<double>(m);
  };
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(n);
  double rho_even = 1.0;
  rho(0) = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho(1) = rho_odd;
  Eigen::Index s = 1;
  while (s < n - 4 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho(s + 1) = rho_even;
      rho(s + 2) = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0.0 && max_s + 1 < n) rho(max_s + 1) = rho_even;
  // Initial positive sequence to initial monotone sequence.
  for (Eigen::Index k = 1; k + 3 <= max_s; k += 2) {
    if (rho(k + 1) + rho(k + 2) > rho(k - 1) + rho(k)) {
      rho(k + 1) = 0.5 * (rho(k - 1) + rho(k));
      rho(k + 2) = rho(k + 1);
    }
  }
  const double total = static_cast<double>(m) * static_cast<double>(n);
  const double tail = max_s + 1 < n ? rho(max_s + 1) : 0.0;
  const double tau = -1.0 + 2.0 * rho.head(max_s).sum() + tail;
  return std::min(total / tau, total * std::log10(total));
}

}  // namespace

double basic_rhat(const std::vector<Eigen::VectorXd>& chains, bool split_chains) {
  validate(chains);
  return psrf(split_chains ? split(chains) : chains);
}

double rhat(const std::vector<Eigen::VectorXd>& chains) {
  validate(chains);
  if (all_identical(chains)) return kNaN;
  const auto halves = split(chains);
  const double bulk = psrf(rank_normalize(halves));
  // Folded draws |x - median| catch scale differences between chains.
  std::vector<double> pooled;
  for (const auto& c : halves) pooled.insert(pooled.end(), c.data(), c.data() + c.size());
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2), pooled.end());
  const double med = pooled[pooled.size() / 2];
  std::vector<Eigen::VectorXd> folded;
  for (const auto& c : halves) folded.emplace_back((c.array() - med).abs());
  const double tail = psrf(rank_normalize(folded));
  if (std::isnan(tail)) return bulk;
  return std::max(bulk, tail);
}

double ess(const std::vector<Eigen::VectorXd>& chains) {
  validate(chains);
  if (all_identical(chains)) return kNaN;
  return geyer_ess(rank_normalize(split(chains)));
}

double ess_basic(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty() || chains[0].size() < 4)
    throw InsufficientData("ess_basic requires at least 4 iterations");
  if (all_identical(chains)) return kNaN;
  return geyer_ess(chains);
}

}  // namespace uasabi
