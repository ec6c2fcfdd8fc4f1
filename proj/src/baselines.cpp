#include "uasabi/error.hpp"
#include "uasabi/inference.hpp"
#include "uasabi/parallel.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

namespace uasabi {
namespace {

struct CoordMap {
  enum Kind { Identity, Lower, Interval } kind = Identity;
  double lo = 0.0, hi = 0.0;
};

CoordMap coord_map(const DistributionSpec& d) {
  const auto [lo, hi] = d.support();
  CoordMap m;
  m.lo = lo;
  m.hi = hi;
  if (std::isfinite(lo) && std::isfinite(hi)) m.kind = CoordMap::Interval;
  else if (std::isfinite(lo)) m.kind = CoordMap::Lower;
  return m;
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

SurrogateLikelihood::SurrogateLikelihood(const std::vector<BasisSpec>& bases,
                                         const std::vector<MultiIndexSet>& sets,
                                         const PriorSpec& prior, const ObservationSet& obs)
    : prior_(prior), y_(obs.y) {
  obs.validate();
  prior.validate();
  if (bases.size() != sets.size() || static_cast<Eigen::Index>(bases.size()) != obs.y.cols())
    throw DimensionMismatch("surrogate likelihood: one surrogate per output required");
  if (obs.x.cols() != prior.x_dim())
    throw DimensionMismatch("surrogate likelihood: observation x width " +
                            std::to_string(obs.x.cols()) + " does not match prior width " +
                            std::to_string(prior.x_dim()));
  for (std::size_t o = 0; o < bases.size(); ++o) {
    if (sets[o].dim != prior.x_dim() + prior.param_dim())
      throw DimensionMismatch("surrogate likelihood: surrogate input dimension mismatch");
    reduced_.emplace_back(bases[o], sets[o], obs.x);
  }
  sigmas_.assign(bases.size(), 1.0);
}

void SurrogateLikelihood::set_coefficients(const std::vector<Eigen::VectorXd>& coefficients,
                                           const std::vector<double>& sigmas) {
  if (coefficients.size() != reduced_.size() || sigmas.size() != reduced_.size())
    throw DimensionMismatch("surrogate likelihood: one coefficient vector and sigma per output");
  for (std::size_t o = 0; o < reduced_.size(); ++o) {
    if (!(sigmas[o] > 0.0)) throw InvalidParameter("surrogate likelihood: sigma must be > 0");
    reduced_[o].set_coefficients(coefficients[o]);
  }
  sigmas_ = sigmas;
}

Eigen::VectorXd SurrogateLikelihood::from_unconstrained(const Eigen::VectorXd& u) const {
  Eigen::VectorXd w(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const CoordMap m = coord_map(prior_.omega_prior[static_cast<std::size_t>(i)]);
    switch (m.kind) {
      case CoordMap::Identity: w(i) = u(i); break;
      case CoordMap::Lower: w(i) = m.lo + std::exp(u(i)); break;
      case CoordMap::Interval: w(i) = m.lo + (m.hi - m.lo) * logistic(u(i)); break;
    }
  }
  return w;
}

Eigen::VectorXd SurrogateLikelihood::to_unconstrained(const Eigen::VectorXd& omega) const {
  Eigen::VectorXd u(omega.size());
  for (Eigen::Index i = 0; i < omega.size(); ++i) {
    const CoordMap m = coord_map(prior_.omega_prior[static_cast<std::size_t>(i)]);
    switch (m.kind) {
      case CoordMap::Identity: u(i) = omega(i); break;
      case CoordMap::Lower: u(i) = std::log(omega(i) - m.lo); break;
      case CoordMap::Interval: {
        const double s = (omega(i) - m.lo) / (m.hi - m.lo);
        u(i) = std::log(s) - std::log1p(-s);
        break;
      }
    }
  }
  return u;
}

double SurrogateLikelihood::log_density_grad(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
  const Eigen::Index q = prior_.param_dim();
  if (u.size() != q) throw DimensionMismatch("surrogate likelihood: parameter length mismatch");
  Eigen::VectorXd w(q), dw(q), g_jac(q);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) {
    const CoordMap m = coord_map(prior_.omega_prior[static_cast<std::size_t>(i)]);
    switch (m.kind) {
      case CoordMap::Identity:
        w(i) = u(i);
        dw(i) = 1.0;
        g_jac(i) = 0.0;
        break;
      case CoordMap::Lower: {
        const double e = std::exp(u(i));
        w(i) = m.lo + e;
        dw(i) = e;
        lp += u(i);
        g_jac(i) = 1.0;
        break;
      }
      case CoordMap::Interval: {
        const double s = logistic(u(i));
        w(i) = m.lo + (m.hi - m.lo) * s;
        dw(i) = (m.hi - m.lo) * s * (1.0 - s);
        lp += std::log(m.hi - m.lo) - std::log1p(std::exp(-u(i))) - std::log1p(std::exp(u(i)));
        g_jac(i) = 1.0 - 2.0 * s;
        break;
      }
    }
  }
  Eigen::VectorXd g_w(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const auto& d = prior_.omega_prior[static_cast<std::size_t>(i)];
    lp += d.logpdf(w(i));
    g_w(i) = d.dlogpdf(w(i));
  }
  Eigen::VectorXd pred;
  Eigen::MatrixXd jac;
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  for (std::size_t o = 0; o < reduced_.size(); ++o) {
    reduced_[o].evaluate(w, pred, &jac);
    const double s2 = sigmas_[o] * sigmas_[o];
    const Eigen::VectorXd r = y_.col(static_cast<Eigen::Index>(o)) - pred;
    lp += -0.5 * r.squaredNorm() / s2 -
          static_cast<double>(r.size()) * (std::log(sigmas_[o]) + kHalfLog2Pi);
    g_w += jac.transpose() * r / s2;
  }
  grad = g_w.cwiseProduct(dw) + g_jac;
  return lp;
}

TargetDensity SurrogateLikelihood::target() const {
  TargetDensity t;
  t.dim = prior_.param_dim();
  for (int i = 0; i < t.dim; ++i) t.names.push_back("omega_" + std::to_string(i + 1));
  t.log_density_grad = [self = *this](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
    return self.log_density_grad(u, g);
  };
  t.initial_point = [self = *this](RngStream& rng) {
    return self.to_unconstrained(self.prior_.sample_omega(rng));
  };
  return t;
}

PointMcmcResult point_mcmc_posterior(const std::vector<PceModel>& models,
                                     const std::vector<double>& sigma_fixed,
                                     const PriorSpec& prior, const ObservationSet& obs,
                                     const McmcConfig& mcmc) {
  std::vector<BasisSpec> bases;
  std::vector<MultiIndexSet> sets;
  std::vector<Eigen::VectorXd> coefs;
  for (const auto& m : models) {
    bases.push_back(m.basis);
    sets.push_back(m.index_set);
    coefs.push_back(m.coefficients);
  }
  SurrogateLikelihood lik(bases, sets, prior, obs);
  lik.set_coefficients(coefs, sigma_fixed);
  PointMcmcResult r;
  r.sigma_fixed = sigma_fixed;
  r.chains = hmc_sample(lik.target(), mcmc);
  for (auto& chain : r.chains.draws)
    for (Eigen::Index i = 0; i < chain.rows(); ++i)
      chain.row(i) = lik.from_unconstrained(chain.row(i).transpose()).transpose();
  r.draws = r.chains.pooled();
  return r;
}

EPostResult epost_posterior(const std::vector<SurrogatePosterior>& posteriors,
                            const PriorSpec& prior, const ObservationSet& obs,
                            const EPostConfig& config) {
  if (posteriors.empty()) throw InvalidParameter("epost_posterior: no surrogate posteriors");
  Eigen::Index n_runs = std::numeric_limits<Eigen::Index>::max();
  std::vector<BasisSpec> bases;
  std::vector<MultiIndexSet> sets;
  for (const auto& p : posteriors) {
    n_runs = std::min(n_runs, p.n_draws());
    bases.push_back(p.basis);
    sets.push_back(p.index_set);
  }
  if (config.max_surrogate_draws) n_runs = std::min(n_runs, *config.max_surrogate_draws);
  if (n_runs < 1) throw EmptyPosterior("epost_posterior: surrogate posterior holds no draws");
  if (config.n_draws < 1) throw InvalidParameter("epost_posterior: n_draws must be >= 1");

  const SurrogateLikelihood base(bases, sets, prior, obs);
  McmcConfig mc;
  mc.n_chains = 1;
  mc.n_warmup = config.n_warmup;
  mc.n_draws = config.n_draws;
  mc.leapfrog_steps = config.leapfrog_steps;
  mc.target_accept = config.target_accept;
  mc.seed = config.seed;

  const int q = prior.param_dim();
  std::vector<Eigen::MatrixXd> per_run(static_cast<std::size_t>(n_runs));
  std::vector<std::string> errors(static_cast<std::size_t>(n_runs));
  const RngStream root(config.seed, 0);
  parallel_for(static_cast<std::size_t>(n_runs), resolve_workers(config.workers), [&](std::size_t i) {
    try {
      SurrogateLikelihood lik = base;
      std::vector<Eigen::VectorXd> c;
      std::vector<double> s;
      for (const auto& p : posteriors) {
        c.push_back(p.coefficients(static_cast<Eigen::Index>(i)));
        s.push_back(p.sigma(static_cast<Eigen::Index>(i)));
      }
      lik.set_coefficients(c, s);
      Eigen::MatrixXd d = hmc_chain(lik.target(), mc, root.child(i));
      for (Eigen::Index r = 0; r < d.rows(); ++r)
        d.row(r) = lik.from_unconstrained(d.row(r).transpose()).transpose();
      per_run[i] = std::move(d);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  EPostResult out;
  out.n_runs = n_runs;
  Eigen::Index ok = 0;
  for (std::size_t i = 0; i < per_run.size(); ++i) {
    if (errors[i].empty()) {
      ++ok;
    } else {
      ++out.n_failed;
      out.failures.push_back("surrogate draw " + std::to_string(i) + ": " + errors[i]);
    }
  }
  if (static_cast<double>(out.n_failed) > config.max_failure_fraction * static_cast<double>(n_runs))
    throw ConvergenceFailure("epost_posterior: " + std::to_string(out.n_failed) + " of " +
                             std::to_string(n_runs) + " per-draw samplers failed");
  out.draws.resize(ok * config.n_draws, q);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < per_run.size(); ++i) {
    if (!errors[i].empty()) continue;
    out.draws.middleRows(row, per_run[i].rows()) = per_run[i];
    row += per_run[i].rows();
  }
  return out;
}

}  // namespace uasabi
