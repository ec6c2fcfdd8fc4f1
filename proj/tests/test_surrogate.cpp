#include "support.hpp"

#include "uasabi/error.hpp"
#include "uasabi/surrogate.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>

using namespace uasabi;

namespace {

const std::vector<std::pair<double, double>> kBox{{1, 200}, {0.6, 1.4}};
const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);

double logsin(double x, double w) { return w * std::log(x) + std::sin(0.05 * x) + 0.01 * x + 1.0; }

SurrogateTrainingSet design(int n) {
  SurrogateTrainingSet d;
  d.inputs = scale_to_box(sobol_points(2, static_cast<std::size_t>(n)), kBox);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y(i) = logsin(d.inputs(i, 0), d.inputs(i, 1));
  d.x_dim = 1;
  return d;
}

McmcConfig mcmc(std::uint64_t seed) {
  McmcConfig c;
  c.n_chains = 4;
  c.n_warmup = 1000;
  c.n_draws = 1000;
  c.leapfrog_steps = 20;
  c.seed = seed;
  c.workers = 1;
  return c;
}

SurrogatePosterior single_draw(const Eigen::VectorXd& c, double sigma) {
  SurrogatePosterior p;
  p.basis = legendre_basis(kBox);
  p.index_set = truncation_indices(2, 3);
  p.x_dim = 1;
  p.draws.resize(1, c.size() + 1);
  p.draws << c.transpose(), sigma;
  return p;
}

}  // namespace

TEST_CASE("log posterior closed forms") {
  const BasisSpec basis = legendre_basis(kBox);
  const auto set = truncation_indices(2, 3);
  SurrogateTrainingSet d = design(16);
  RngStream rng(1);
  Eigen::VectorXd c(10);
  for (Eigen::Index k = 0; k < 10; ++k) c(k) = rng.normal();
  d.y = design_matrix(basis, set, d.inputs) * c;
  const SurrogatePrior prior;
  CHECK(surrogate_log_posterior(c, 1.0, d, basis, set, prior).log_likelihood ==
        doctest::Approx(-16 * kHalfLog2Pi).epsilon(1e-12));

  SurrogateTrainingSet one;
  one.inputs = Eigen::MatrixXd::Constant(1, 2, 1.0);
  one.inputs(0, 0) = 50.0;
  one.y = Eigen::VectorXd::Zero(1);
  one.x_dim = 1;
  const double sigma = 0.7;
  CHECK(surrogate_log_posterior(Eigen::VectorXd::Zero(10), sigma, one, basis, set, prior).log_likelihood ==
        doctest::Approx(-std::log(sigma * std::sqrt(2 * M_PI))).epsilon(1e-12));

  CHECK_THROWS_AS(surrogate_log_posterior(c, 0.0, d, basis, set, prior), DomainError);
  CHECK_THROWS_AS(surrogate_log_posterior(c.head(3), 1.0, d, basis, set, prior), DimensionMismatch);
}

TEST_CASE("log posterior gradient matches finite differences") {
  const BasisSpec basis = legendre_basis(kBox);
  const auto set = truncation_indices(2, 3);
  const SurrogateTrainingSet d = design(16);
  const SurrogatePrior prior;
  RngStream rng(2);
  auto f = [&](const Eigen::VectorXd& v) {
    return surrogate_log_posterior(v.head(10), std::exp(v(10)), d, basis, set, prior).total();
  };
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd v(11);
    for (Eigen::Index k = 0; k < 11; ++k) v(k) = rng.normal();
    v(10) = std::log(0.3 + rng.uniform());
    const Eigen::VectorXd analytic = surrogate_log_posterior(v.head(10), std::exp(v(10)), d, basis, set, prior).gradient;
    worst = std::max(worst, testing::max_relative_error(analytic, testing::numeric_gradient(f, v)));
  }
  CHECK(worst < 1e-5);

  const TargetDensity target = surrogate_target(design_matrix(basis, set, d.inputs), d.y, prior);
  Eigen::MatrixXd pts(20, 11);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = 0.5 * rng.normal();
  CHECK(gradient_check(target, pts) < 1e-5);
}

TEST_CASE("posterior recovers synthetic polynomial coefficients") {
  const BasisSpec basis = legendre_basis(kBox);
  const auto set = truncation_indices(2, 3);
  SurrogateTrainingSet d = design(64);
  RngStream rng(3);
  Eigen::VectorXd truth(10);
  for (Eigen::Index k = 0; k < 10; ++k) truth(k) = rng.normal();
  d.y = design_matrix(basis, set, d.inputs) * truth;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += 0.1 * rng.normal();
  const SurrogatePosterior post = fit_surrogate(d, basis, set, SurrogatePrior{}, mcmc(4));
  CHECK(post.n_draws() == 4000);
  for (Eigen::Index k = 0; k < 10; ++k) {
    const Eigen::VectorXd ck = post.draws.col(k);
    CHECK(std::abs(ck.mean() - truth(k)) < 4 * testing::sample_sd(ck));
  }
  CHECK(post.draws.col(10).minCoeff() > 0.0);
  CHECK(post.provenance.rhat.maxCoeff() < 1.01);
  CHECK(post.provenance.data_digest == d.digest());
}

TEST_CASE("fixed sigma posterior matches the conjugate Gaussian") {
  const BasisSpec basis = legendre_basis(kBox);
  const auto set = truncation_indices(2, 3);
  const SurrogateTrainingSet d = design(16);
  SurrogatePrior prior;
  prior.fixed_sigma = 0.5;
  const SurrogatePosterior post = fit_surrogate(d, basis, set, prior, mcmc(5));

  const Eigen::MatrixXd psi = design_matrix(basis, set, d.inputs);
  const double s2 = 0.25, tau2 = 25.0;
  const Eigen::MatrixXd precision = psi.transpose() * psi / s2 + Eigen::MatrixXd::Identity(10, 10) / tau2;
  const Eigen::LLT<Eigen::MatrixXd> llt(precision);
  const Eigen::VectorXd mean = llt.solve(psi.transpose() * d.y / s2);
  const Eigen::VectorXd sd = llt.solve(Eigen::MatrixXd::Identity(10, 10)).diagonal().cwiseSqrt();
  for (Eigen::Index k = 0; k < 10; ++k) {
    CAPTURE(k);
    const Eigen::VectorXd ck = post.draws.col(k);
    const double se = sd(k) / std::sqrt(post.provenance.ess(k));
    CHECK(std::abs(ck.mean() - mean(k)) < 3 * se);
    const double ratio = testing::sample_sd(ck) / sd(k);
    CHECK(ratio > 0.9);
    CHECK(ratio < 1.1);
  }
  CHECK((post.draws.col(10).array() == 0.5).all());
}

TEST_CASE("no data reproduces the prior") {
  const BasisSpec basis = legendre_basis(kBox);
  const auto set = truncation_indices(2, 1);
  SurrogateTrainingSet empty;
  empty.inputs.resize(0, 2);
  empty.y.resize(0);
  empty.x_dim = 1;
  FitOptions opts;
  opts.allow_unconverged = true;
  const SurrogatePosterior post = fit_surrogate(empty, basis, set, SurrogatePrior{}, mcmc(6), opts);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Eigen::VectorXd ck = post.draws.col(k);
    const double se = 5.0 / std::sqrt(post.provenance.ess(k));
    CHECK(std::abs(ck.mean()) < 4 * se);
    CHECK(testing::sample_sd(ck) == doctest::Approx(5.0).epsilon(0.1));
  }
  const Eigen::VectorXd s = post.draws.col(3);
  CHECK(std::abs(s.mean() - 0.5 * std::sqrt(2 / M_PI)) < 4 * 0.3 / std::sqrt(post.provenance.ess(3)));
}

TEST_CASE("sparse LogSin design leaves sigma away from zero") {
  const SurrogatePosterior post =
      fit_surrogate(design(16), legendre_basis(kBox), truncation_indices(2, 3), SurrogatePrior{}, mcmc(7));
  std::vector<double> s = testing::to_vector(post.draws.col(10));
  std::sort(s.begin(), s.end());
  CHECK(s[s.size() / 20] > 0.1);
}

TEST_CASE("point surrogate medians") {
  SurrogatePosterior p = single_draw(Eigen::VectorXd::Zero(10), 1.0);
  p.draws = Eigen::MatrixXd::Ones(3, 11);
  p.draws.col(0) << 1, 3, 2;
  CHECK(point_surrogate(p).coefficients(0) == 2.0);
  p.draws = Eigen::MatrixXd::Ones(4, 11);
  p.draws.col(0) << 4, 1, 3, 2;
  CHECK(point_surrogate(p).coefficients(0) == 2.5);
  p.draws.col(10) << 0.1, 0.4, 0.2, 0.3;
  CHECK(median_sigma(p) == doctest::Approx(0.25));

  RngStream rng(8);
  p.draws.resize(20001, 11);
  for (Eigen::Index i = 0; i < p.draws.size(); ++i) p.draws.data()[i] = 1.0 + rng.normal();
  const double mean = p.draws.col(3).mean();
  CHECK(std::abs(point_surrogate(p).coefficients(3) - mean) < 4 * 1.2533 / std::sqrt(20001.0));

  p.draws.resize(0, 11);
  CHECK_THROWS_AS(point_surrogate(p), EmptyPosterior);
}

TEST_CASE("error-adjusted sampling") {
  RngStream rng(9);
  Eigen::VectorXd c(10);
  for (Eigen::Index k = 0; k < 10; ++k) c(k) = rng.normal();
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 73.0), w = Eigen::VectorXd::Constant(1, 1.1);
  const PceModel model(legendre_basis(kBox), truncation_indices(2, 3), c);
  const double exact = pce_predict(model, Eigen::Vector2d(73.0, 1.1));

  CHECK(std::abs(sample_error_adjusted(model, 1e-12, x, w, rng) - exact) < 1e-9);

  const double sigma = 0.3;
  const int n = 100000;
  Eigen::VectorXd ys(n);
  for (int i = 0; i < n; ++i) ys(i) = sample_error_adjusted(model, sigma, x, w, rng);
  CHECK(std::abs(ys.mean() - exact) < 4 * sigma / std::sqrt(n));
  CHECK(testing::sample_sd(ys) == doctest::Approx(sigma).epsilon(0.02));

  RngStream a(100), b(200);
  std::vector<double> ya(10000), yb(10000);
  for (int i = 0; i < 10000; ++i) {
    ya[i] = sample_error_adjusted(model, sigma, x, w, a);
    yb[i] = sample_error_adjusted(model, sigma, x, w, b);
  }
  CHECK(ya != yb);
  CHECK(testing::ks2_pvalue(ya, yb) > 0.001);
}

TEST_CASE("error-adjusted sampling over the posterior is the predictive mixture") {
  const SurrogatePosterior post =
      fit_surrogate(design(16), legendre_basis(kBox), truncation_indices(2, 3), SurrogatePrior{}, mcmc(10));
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 150.0), w = Eigen::VectorXd::Constant(1, 0.8);
  Eigen::VectorXd means(post.n_draws());
  for (Eigen::Index i = 0; i < post.n_draws(); ++i) means(i) = pce_predict(post.model(i), Eigen::Vector2d(150.0, 0.8));
  auto mixture_cdf = [&](double y) {
    double p = 0.0;
    for (Eigen::Index i = 0; i < post.n_draws(); ++i) p += normal_cdf((y - means(i)) / post.sigma(i));
    return p / static_cast<double>(post.n_draws());
  };
  RngStream rng(11);
  std::vector<double> ys(10000);
  for (double& y : ys)
    y = sample_error_adjusted(post, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(post.n_draws()))), x, w, rng);
  CHECK(testing::ks_pvalue(ys, mixture_cdf) > 0.001);
}
