#include "uasabi/error.hpp"
#include "uasabi/mcmc.hpp"
#include "uasabi/parallel.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace uasabi {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("UASABI_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn) {
  const auto w = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

DualAveraging::DualAveraging(double initial_step, double target_accept)
    : delta_(target_accept) {
  restart(initial_step);
}

void DualAveraging::restart(double step) {
  mu_ = std::log(10.0 * step);
  hbar_ = 0.0;
  log_step_ = std::log(step);
  log_step_bar_ = 0.0;
  t_ = 0;
}

double DualAveraging::update(double accept_prob) {
  constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  ++t_;
  const double w = 1.0 / (t_ + t0);
  hbar_ = (1.0 - w) * hbar_ + w * (delta_ - accept_prob);
  log_step_ = mu_ - std::sqrt(static_cast<double>(t_)) / gamma * hbar_;
  const double eta = std::pow(static_cast<double>(t_), -kappa);
  log_step_bar_ = eta * log_step_ + (1.0 - eta) * log_step_bar_;
  return std::exp(log_step_);
}

double DualAveraging::final_step() const { return std::exp(log_step_bar_); }

namespace {

struct Hamiltonian {
  const TargetDensity& target;
  Eigen::VectorXd inv_metric;

  double kinetic(const Eigen::VectorXd& p) const {
    return 0.5 * p.cwiseProduct(inv_metric).dot(p);
  }
};

struct State {
  Eigen::VectorXd q;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

/// Returns the proposal and its Hamiltonian; non-finite H marks divergence.
double leapfrog(const Hamiltonian& h, const State& start, const Eigen::VectorXd& p0,
                double step, int n_steps, State& out) {
  out = start;
  Eigen::VectorXd p = p0;
  for (int s = 0; s < n_steps; ++s) {
    p += 0.5 * step * out.grad;
    out.q += step * h.inv_metric.cwiseProduct(p);
    out.logp = h.target.log_density_grad(out.q, out.grad);
    if (!std::isfinite(out.logp) || !out.grad.allFinite())
      return std::numeric_limits<double>::infinity();
    p += 0.5 * step * out.grad;
  }
  return -out.logp + h.kinetic(p);
}

Eigen::VectorXd draw_momentum(const Eigen::VectorXd& inv_metric, RngStream& rng) {
  Eigen::VectorXd p(inv_metric.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p(i) = rng.normal() / std::sqrt(inv_metric(i));
  return p;
}

double accept_prob(double h0, double h1) {
  if (!std::isfinite(h1)) return 0.0;
  return h1 < h0 ? 1.0 : std::exp(h0 - h1);
}

double find_reasonable_step(const Hamiltonian& h, const State& s, RngStream& rng) {
  double step = 1.0;
  State prop;
  Eigen::VectorXd p = draw_momentum(h.inv_metric, rng);
  const double h0 = -s.logp + h.kinetic(p);
  double a = accept_prob(h0, leapfrog(h, s, p, step, 1, prop));
  const int dir = a > 0.5 ? 1 : -1;
  for (int it = 0; it < 50; ++it) {
    if (dir == 1 && !(a > 0.5)) break;
    if (dir == -1 && !(a < 0.5)) break;
    step = dir == 1 ? step * 2.0 : step * 0.5;
    p = draw_momentum(h.inv_metric, rng);
    const double hh = -s.logp + h.kinetic(p);
    a = accept_prob(hh, leapfrog(h, s, p, step, 1, prop));
  }
  return step;
}

struct AdaptationWindows {
  int init_buffer = 0;
  int term_buffer = 0;
  int base_window = 0;
  bool enabled = false;
};

AdaptationWindows plan_windows(int n_warmup) {
  AdaptationWindows w;
  if (n_warmup < 20) return w;
  w.enabled = true;
  if (n_warmup < 150) {
    w.init_buffer = static_cast<int>(0.15 * n_warmup);
    w.term_buffer = static_cast<int>(0.1 * n_warmup);
    w.base_window = n_warmup - w.init_buffer - w.term_buffer;
  } else {
    w.init_buffer = 75;
    w.term_buffer = 50;
    w.base_window = 25;
  }
  return w;
}

}  // namespace

Eigen::MatrixXd hmc_chain(const TargetDensity& target, const McmcConfig& config,
                          RngStream rng, double* accept_rate, double* step_size,
                          int* divergences) {
  const int d = target.dim;
  Hamiltonian ham{target, Eigen::VectorXd::Ones(d)};

  State cur;
  cur.grad.resize(d);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    if (target.initial_point) {
      cur.q = target.initial_point(rng);
    } else {
      cur.q.resize(d);
      for (int i = 0; i < d; ++i) cur.q(i) = 4.0 * rng.uniform() - 2.0;
    }
    cur.logp = target.log_density_grad(cur.q, cur.grad);
    ok = std::isfinite(cur.logp) && cur.grad.allFinite();
  }
  if (!ok)
    throw InitializationFailure(
        "hmc: non-finite log density at every initial point after 100 retries");

  double step = find_reasonable_step(ham, cur, rng);
  DualAveraging adapt(step, config.target_accept);

  const AdaptationWindows plan = plan_windows(config.n_warmup);
  int window_start = plan.init_buffer;
  int window_size = plan.base_window;
  int window_end = window_start + window_size;
  const int slow_end = config.n_warmup - plan.term_buffer;
  if (window_end > slow_end) window_end = slow_end;
  Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd w_m2 = Eigen::VectorXd::Zero(d);
  int w_count = 0;

  Eigen::MatrixXd draws(config.n_draws, d);
  int accepted = 0, divergent = 0;
  const int thin = std::max(config.thin, 1);
  const int total = config.n_warmup + config.n_draws * thin;
  const int lmax = std::max(config.leapfrog_steps, 1);
  State prop;
  for (int it = 0; it < total; ++it) {
    const bool warmup = it < config.n_warmup;
    const int n_steps = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(lmax)));
    const Eigen::VectorXd p = draw_momentum(ham.inv_metric, rng);
    const double h0 = -cur.logp + ham.kinetic(p);
    const double h1 = leapfrog(ham, cur, p, step, n_steps, prop);
    const bool diverged = !std::isfinite(h1) || h1 - h0 > 1000.0;
    const double a = diverged ? 0.0 : accept_prob(h0, h1);
    if (rng.uniform() < a) {
      cur = prop;
      if (!warmup) ++accepted;
    }
    if (warmup) {
      step = adapt.update(a);
      if (plan.enabled && it >= window_start && it < window_end) {
        ++w_count;
        const Eigen::VectorXd delta = cur.q - w_mean;
        w_mean += delta / w_count;
        w_m2 += delta.cwiseProduct(cur.q - w_mean);
        if (it + 1 == window_end) {
          const double n = w_count;
          Eigen::VectorXd var = w_m2 / std::max(n - 1.0, 1.0);
          ham.inv_metric =
              (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
          step = find_reasonable_step(ham, cur, rng);
          adapt.restart(step);
          w_mean.setZero();
          w_m2.setZero();
          w_count = 0;
          window_start = window_end;
          window_size *= 2;
          window_end = window_start + window_size;
          // Absorb a final short window into the current one.
          if (window_end + 2 * window_size > slow_end) window_end = slow_end;
        }
      }
      if (it + 1 == config.n_warmup) step = adapt.final_step();
    } else {
      if (diverged) ++divergent;
      const int k = it - config.n_warmup;
      if (k % thin == thin - 1) draws.row(k / thin) = cur.q.transpose();
    }
  }
  if (accept_rate)
    *accept_rate = config.n_draws > 0
                       ? static_cast<double>(accepted) / (static_cast<double>(config.n_draws) * thin)
                       : 0.0;
  if (step_size) *step_size = step;
  if (divergences) *divergences = divergent;
  return draws;
}

ChainOutput hmc_sample(const TargetDensity& target, const McmcConfig& config) {
  if (config.n_chains < 1 || config.n_draws < 1)
    throw InvalidParameter("hmc_sample: need at least one chain and one draw");
  if (!(config.target_accept > 0.0 && config.target_accept < 1.0))
    throw InvalidParameter("hmc_sample: target_accept must lie in (0, 1)");
  ChainOutput out;
  const auto n_chains = static_cast<std::size_t>(config.n_chains);
  out.draws.resize(n_chains);
  out.accept_rate.resize(config.n_chains);
  out.step_size.resize(config.n_chains);
  out.divergences.assign(n_chains, 0);
  const RngStream root(config.seed, 0);
  parallel_for(n_chains, resolve_workers(config.workers), [&](std::size_t c) {
    double acc = 0.0, step = 0.0;
    int div = 0;
    out.draws[c] = hmc_chain(target, config, root.child(c), &acc, &step, &div);
    out.accept_rate(static_cast<Eigen::Index>(c)) = acc;
    out.step_size(static_cast<Eigen::Index>(c)) = step;
    out.divergences[c] = div;
  });

  const int d = target.dim;
  out.rhat = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
  out.ess = out.rhat;
  if (config.n_chains >= 2 && config.n_draws >= 4) {
    for (int k = 0; k < d; ++k) {
      const auto chains = out.coordinate(k);
      out.rhat(k) = rhat(chains);
      out.ess(k) = ess(chains);
    }
  }
  int total_div = 0;
  for (int v : out.divergences) total_div += v;
  const double rate =
      static_cast<double>(total_div) /
      (static_cast<double>(config.n_chains) * config.n_draws * std::max(config.thin, 1));
  if (rate > 0.1) {
    out.warnings.push_back("divergence rate " + std::to_string(rate) +
                           " exceeds 10% of post-warmup iterations");
  }
  return out;
}

Eigen::MatrixXd ChainOutput::pooled() const {
  if (draws.empty()) return {};
  const Eigen::Index n = draws[0].rows();
  Eigen::MatrixXd all(n * static_cast<Eigen::Index>(draws.size()), draws[0].cols());
  for (std::size_t c = 0; c < draws.size(); ++c)
    all.middleRows(static_cast<Eigen::Index>(c) * n, n) = draws[c];
  return all;
}

std::vector<Eigen::VectorXd> ChainOutput::coordinate(int k) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.emplace_back(d.col(k));
  return out;
}

double gradient_check(const TargetDensity& target, const Eigen::MatrixXd& points,
                      double h) {
  double worst = 0.0;
  Eigen::VectorXd g(target.dim), scratch(target.dim);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    Eigen::VectorXd q = points.row(r).transpose();
    target.log_density_grad(q, g);
    for (int i = 0; i < target.dim; ++i) {
      Eigen::VectorXd qp = q, qm = q;
      qp(i) += h;
      qm(i) -= h;
      const double fd = (target.log_density_grad(qp, scratch) -
                         target.log_density_grad(qm, scratch)) /
                        (2.0 * h);
      const double err = std::abs(fd - g(i)) / std::max(1.0, std::abs(g(i)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace uasabi
