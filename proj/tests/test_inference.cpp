#include "support.hpp"

#include "uasabi/error.hpp"
#include "uasabi/inference.hpp"

#include <doctest.h>

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <set>

using namespace uasabi;

namespace {

const std::vector<std::pair<double, double>> kUnitBox{{-1, 1}, {-1, 1}};
const std::vector<std::pair<double, double>> kLogSinBox{{1, 200}, {0.6, 1.4}};

double logsin(double x, double w) { return w * std::log(x) + std::sin(0.05 * x) + 0.01 * x + 1.0; }

// y = a + b * omega on a degree-1 Legendre basis over (x, omega); x has no effect.
PceModel linear_model(double a, double b) {
  Eigen::Vector3d c(a, 0.0, b / std::sqrt(3.0));
  return PceModel(legendre_basis(kUnitBox), truncation_indices(2, 1), c);
}

SurrogatePosterior posterior_of(const std::vector<PceModel>& models, const std::vector<double>& sigmas) {
  SurrogatePosterior p;
  p.basis = models.front().basis;
  p.index_set = models.front().index_set;
  p.x_dim = 1;
  const auto k = models.front().coefficients.size();
  p.draws.resize(static_cast<Eigen::Index>(models.size()), k + 1);
  for (std::size_t i = 0; i < models.size(); ++i)
    p.draws.row(static_cast<Eigen::Index>(i)) << models[i].coefficients.transpose(), sigmas[i];
  return p;
}

PriorSpec normal_prior() { return {{DistributionSpec::uniform(-1, 1)}, {DistributionSpec::normal(0, 1)}}; }

PriorSpec logsin_prior() { return {{DistributionSpec::uniform(1, 200)}, {DistributionSpec::normal(1, 0.2)}}; }

SurrogatePosterior logsin_posterior(std::uint64_t seed) {
  SurrogateTrainingSet d;
  d.inputs = scale_to_box(sobol_points(2, 16), kLogSinBox);
  d.y.resize(16);
  for (int i = 0; i < 16; ++i) d.y(i) = logsin(d.inputs(i, 0), d.inputs(i, 1));
  d.x_dim = 1;
  McmcConfig m;
  m.n_draws = 250;
  m.thin = 4;
  m.leapfrog_steps = 20;
  m.seed = seed;
  m.workers = 1;
  return fit_surrogate(d, legendre_basis(kLogSinBox), truncation_indices(2, 3), SurrogatePrior{}, m);
}

// Least-squares degree-3 fit to LogSin on a dense design; nearly linear in
// omega, so posteriors against it are unimodal.
PceModel logsin_least_squares() {
  const BasisSpec basis = legendre_basis(kLogSinBox);
  const auto set = truncation_indices(2, 3);
  const Eigen::MatrixXd pts = scale_to_box(sobol_points(2, 512), kLogSinBox);
  Eigen::VectorXd y(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) y(i) = logsin(pts(i, 0), pts(i, 1));
  const Eigen::MatrixXd psi = design_matrix(basis, set, pts);
  return PceModel(basis, set, psi.colPivHouseholderQr().solve(y));
}

ObservationSet logsin_observations(double omega, RngStream& rng, int n = 4) {
  ObservationSet s{Eigen::MatrixXd(n, 1), Eigen::MatrixXd(n, 1)};
  for (int j = 0; j < n; ++j) {
    s.x(j, 0) = 1.0 + 199.0 * rng.uniform();
    s.y(j, 0) = logsin(s.x(j, 0), omega);
  }
  return s;
}

McmcConfig mcmc(std::uint64_t seed) {
  McmcConfig m;
  m.n_chains = 4;
  m.n_warmup = 1000;
  m.n_draws = 1000;
  m.seed = seed;
  m.workers = 1;
  return m;
}

double mean_se(const ChainOutput& out, int k) {
  return testing::sample_sd(out.pooled().col(k)) / std::sqrt(out.ess(k));
}

// Standard error of the mean of one long chain, splitting it into four.
double chain_mean_se(const Eigen::VectorXd& v) {
  const Eigen::Index q = v.size() / 4;
  std::vector<Eigen::VectorXd> parts;
  for (int i = 0; i < 4; ++i) parts.emplace_back(v.segment(i * q, q));
  return testing::sample_sd(v) / std::sqrt(ess(parts));
}

std::vector<double> first_outputs(const GeneratorMode& mode, const PriorSpec& prior, int n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> ys(static_cast<std::size_t>(n));
  for (double& y : ys) y = generate_training_item(mode, prior, rng).set.y(0, 0);
  return ys;
}

TrainSchedule toy_schedule() {
  TrainSchedule s;
  s.epochs = 40;
  s.batches_per_epoch = 64;
  s.batch_size = 64;
  s.learning_rate = 2e-3;
  s.calibration_size = 2048;
  return s;
}

// omega ~ N(0, 1), y = omega + N(0, 0.1), one element per set.
GeneratorMode toy_mode() {
  GeneratorMode mode;
  mode.source = UncertaintyAwareSource{{posterior_of({linear_model(0.0, 1.0)}, {0.1})}};
  mode.observations_per_set = 1;
  return mode;
}

}  // namespace

TEST_CASE("constant point surrogate gives constant outputs") {
  GeneratorMode mode;
  mode.source = PointSurrogateSource{{linear_model(5.0, 0.0)}};
  RngStream rng(1);
  for (int i = 0; i < 100; ++i) {
    const TrainingItem item = generate_training_item(mode, normal_prior(), rng);
    CHECK(item.set.size() == 4);
    CHECK((item.set.y.array() == 5.0).all());
  }
}

TEST_CASE("one-draw near-zero-sigma uncertainty-aware generation equals point generation") {
  const PceModel m = linear_model(0.5, 2.0);
  GeneratorMode ua, point;
  ua.source = UncertaintyAwareSource{{posterior_of({m}, {1e-12})}};
  point.source = PointSurrogateSource{{m}};
  CHECK(testing::ks2_pvalue(first_outputs(ua, normal_prior(), 10000, 2), first_outputs(point, normal_prior(), 10000, 3)) >
        0.001);

  RngStream rng(4);
  const TrainingItem item = generate_training_item(ua, normal_prior(), rng);
  for (Eigen::Index j = 0; j < item.set.size(); ++j)
    CHECK(std::abs(item.set.y(j, 0) - pce_predict(m, Eigen::Vector2d(item.set.x(j, 0), item.omega(0)))) < 1e-9);
}

TEST_CASE("uncertainty-aware outputs follow the surrogate mixture") {
  const SurrogatePosterior post = posterior_of(
      {linear_model(0.0, 1.0), linear_model(1.0, 0.5), linear_model(-0.5, 2.0), linear_model(2.0, -1.0),
       linear_model(0.3, 0.3)},
      {0.2, 0.5, 0.1, 0.3, 1.0});
  GeneratorMode mode;
  mode.source = UncertaintyAwareSource{{post}};
  mode.observations_per_set = 1;
  const PriorSpec pinned{{DistributionSpec::uniform(0.25, 0.25 + 1e-12)}, {DistributionSpec::uniform(0.7, 0.7 + 1e-12)}};
  auto cdf = [&](double y) {
    double p = 0.0;
    for (Eigen::Index i = 0; i < post.n_draws(); ++i)
      p += normal_cdf((y - pce_predict(post.model(i), Eigen::Vector2d(0.25, 0.7))) / post.sigma(i));
    return p / static_cast<double>(post.n_draws());
  };
  CHECK(testing::ks_pvalue(first_outputs(mode, pinned, 100000, 5), cdf) > 0.001);
}

TEST_CASE("one surrogate draw is shared by all elements of an item") {
  GeneratorMode mode;
  mode.source = UncertaintyAwareSource{{posterior_of({linear_model(5.0, 0.0), linear_model(-5.0, 0.0)}, {1e-12, 1e-12})}};
  RngStream rng(6);
  std::set<long> seen;
  for (int i = 0; i < 200; ++i) {
    const TrainingItem item = generate_training_item(mode, normal_prior(), rng);
    const double first = item.set.y(0, 0);
    CHECK((item.set.y.array() - first).abs().maxCoeff() < 1e-9);
    seen.insert(std::lround(first));
  }
  CHECK(seen == std::set<long>{-5, 5});
}

TEST_CASE("offline budget is enforced") {
  GeneratorMode mode;
  mode.source = SimulatorSource{[](const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
                                  return Eigen::VectorXd::Constant(1, logsin(x(0), w(0)));
                                },
                                1};
  mode.online = false;
  mode.budget = 2;
  TrainingGenerator gen(mode, logsin_prior());
  RngStream rng(7);
  gen.next(rng);
  gen.next(rng);
  CHECK(gen.generated() == 2);
  CHECK_THROWS_AS(gen.next(rng), BudgetExhausted);
}

TEST_CASE("npe on the conditional Gaussian toy") {
  RngStream init(8);
  const NpeModel fresh = init_npe(NpeSpec::make(1, 1, 1), init);
  const TrainResult r = train_npe(toy_mode(), normal_prior(), fresh, toy_schedule(), RngStream(9));

  REQUIRE(r.loss_trace.size() == 40u * 64u);
  // Identity flow: per-item NLL is 0.5 * |u|^2 + log(2 pi) with mean 2 * 1.4189385 and sd 1.
  CHECK(std::abs(r.loss_trace.front() - 2 * 1.4189385) < 4.0 / std::sqrt(64.0));
  double first = 0.0, last = 0.0;
  for (int e = 0; e < 10; ++e) {
    first += r.epoch_loss(e);
    last += r.epoch_loss(30 + e);
  }
  CHECK(last < first);

  const double post_sd = std::sqrt(0.01 / 1.01);
  RngStream rng(10);
  for (double y = -2.0; y <= 2.0 + 1e-9; y += 0.5) {
    CAPTURE(y);
    const ObservationSet obs{Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, y)};
    const Eigen::VectorXd d = npe_posterior(r.model, obs, 4000, rng).col(0);
    CHECK(std::abs(d.mean() - y / 1.01) < 0.05);
    CHECK(testing::sample_sd(d) == doctest::Approx(post_sd).epsilon(0.1));
  }

  SUBCASE("identical seed gives identical weights") {
    const TrainResult again = train_npe(toy_mode(), normal_prior(), fresh, toy_schedule(), RngStream(9));
    CHECK(again.model.weights == r.model.weights);
    CHECK(again.loss_trace == r.loss_trace);
  }

  SUBCASE("inference cost does not grow with use") {
    const ObservationSet obs{Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.3)};
    npe_posterior(r.model, obs, 4000, rng);
    Eigen::VectorXd t(20);
    for (int i = 0; i < 20; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      npe_posterior(r.model, obs, 4000, rng);
      t(i) = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    CHECK(testing::sample_sd(t) / t.mean() < 0.5);
  }
}

TEST_CASE("flow fitted to a fixed Gaussian target") {
  // omega ~ N(2, 0.5) and the output carries no information about it.
  GeneratorMode mode;
  mode.source = SimulatorSource{[](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return x; }, 1};
  const PriorSpec prior{{DistributionSpec::normal(0, 1)}, {DistributionSpec::normal(2, 0.5)}};
  RngStream init(11);
  TrainSchedule s = toy_schedule();
  s.epochs = 20;
  const TrainResult r = train_npe(mode, prior, init_npe(NpeSpec::make(1, 1, 1), init), s, RngStream(12));
  RngStream rng(13);
  const ObservationSet obs{Eigen::MatrixXd::Constant(4, 1, 0.1), Eigen::MatrixXd::Constant(4, 1, 0.1)};
  const Eigen::VectorXd d = npe_posterior(r.model, obs, 10000, rng).col(0);
  CHECK(d.mean() == doctest::Approx(2.0).epsilon(0.05));
  CHECK(testing::sample_sd(d) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("offline low-budget pool trains") {
  GeneratorMode mode;
  mode.source = SimulatorSource{[](const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
                                  return Eigen::VectorXd::Constant(1, logsin(x(0), w(0)));
                                },
                                1};
  mode.online = false;
  mode.budget = 64;
  TrainSchedule s = toy_schedule();
  s.epochs = 5;
  s.calibration_size = 64;
  RngStream init(14);
  const TrainResult r = train_npe(mode, logsin_prior(), init_npe(NpeSpec::make(1, 1, 1), init), s, RngStream(15));
  CHECK(r.loss_trace.size() == 5u * 64u);
  for (double l : r.loss_trace) CHECK(std::isfinite(l));
}

TEST_CASE("untrained estimator and summary invariance") {
  RngStream init(16);
  const NpeModel m = init_npe(NpeSpec::make(1, 1, 1), init);
  RngStream rng(17);
  const ObservationSet obs = logsin_observations(1.0, rng);
  RngStream a(18), b(18);
  const Eigen::VectorXd d = npe_posterior(m, obs, 20000, a).col(0);
  CHECK(std::abs(d.mean()) < 0.03);
  CHECK(testing::sample_sd(d) == doctest::Approx(1.0).epsilon(0.03));

  ObservationSet permuted = obs;
  permuted.x = obs.x.colwise().reverse();
  permuted.y = obs.y.colwise().reverse();
  CHECK(npe_posterior(m, permuted, 20000, b).col(0) == d);

  const ObservationSet wide{Eigen::MatrixXd::Zero(4, 2), Eigen::MatrixXd::Zero(4, 1)};
  CHECK_THROWS_AS(npe_posterior(m, wide, 10, a), DimensionMismatch);
}

TEST_CASE("point MCMC on a linear surrogate") {
  const double a = 0.5, b = 2.0, sigma = 0.5;
  RngStream rng(19);
  ObservationSet obs{Eigen::MatrixXd(4, 1), Eigen::MatrixXd(4, 1)};
  for (int j = 0; j < 4; ++j) {
    obs.x(j, 0) = rng.uniform();
    obs.y(j, 0) = a + b * 0.4 + sigma * rng.normal();
  }
  const PointMcmcResult r = point_mcmc_posterior({linear_model(a, b)}, {sigma}, normal_prior(), obs, mcmc(20));
  const double precision = 1.0 + 4 * b * b / (sigma * sigma);
  const double mean = b * (obs.y.array() - a).sum() / (sigma * sigma) / precision;
  const Eigen::VectorXd d = r.draws.col(0);
  CHECK(std::abs(d.mean() - mean) < 3 * mean_se(r.chains, 0));
  CHECK(testing::sample_sd(d) == doctest::Approx(1.0 / std::sqrt(precision)).epsilon(0.1));

  SUBCASE("uninformative likelihood returns the prior") {
    const PointMcmcResult p = point_mcmc_posterior({linear_model(a, b)}, {1e4}, normal_prior(), obs, mcmc(21));
    CHECK(std::abs(p.draws.col(0).mean()) < 4 * mean_se(p.chains, 0));
    CHECK(testing::sample_sd(p.draws.col(0)) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("point MCMC with a tiny sigma concentrates at the least-squares parameter") {
  const PceModel point = logsin_least_squares();
  RngStream rng(23);
  const ObservationSet obs = logsin_observations(1.1, rng);
  double best = 0.0, best_sse = std::numeric_limits<double>::infinity();
  for (double w = 0.5; w <= 1.5; w += 1e-4) {
    double sse = 0.0;
    for (int j = 0; j < 4; ++j) sse += std::pow(obs.y(j, 0) - pce_predict(point, Eigen::Vector2d(obs.x(j, 0), w)), 2);
    if (sse < best_sse) {
      best_sse = sse;
      best = w;
    }
  }
  const PointMcmcResult r = point_mcmc_posterior({point}, {1e-3}, logsin_prior(), obs, mcmc(24));
  CHECK(std::abs(r.draws.col(0).mean() - best) < 2e-3);
}

TEST_CASE("E-Post with one surrogate draw matches point MCMC") {
  const PceModel model = logsin_least_squares();
  const double sigma = 0.3;
  const SurrogatePosterior one = posterior_of({model}, {sigma});
  RngStream rng(26);
  const ObservationSet obs = logsin_observations(0.9, rng);
  EPostConfig ec;
  ec.n_draws = 4000;
  ec.seed = 27;
  ec.workers = 1;
  const EPostResult e = epost_posterior({one}, logsin_prior(), obs, ec);
  const PointMcmcResult p = point_mcmc_posterior({model}, {sigma}, logsin_prior(), obs, mcmc(28));
  const Eigen::VectorXd de = e.draws.col(0), dp = p.draws.col(0);
  const double se = std::hypot(chain_mean_se(de), mean_se(p.chains, 0));
  CHECK(std::abs(de.mean() - dp.mean()) < 4 * se);
  const double ratio = testing::sample_sd(de) / testing::sample_sd(dp);
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);
}

TEST_CASE("E-Post with two separated surrogate draws pools both posteriors") {
  const double sigma = 0.3;
  const std::vector<PceModel> models{linear_model(0.0, 2.0), linear_model(3.0, 2.0)};
  RngStream rng(29);
  ObservationSet obs{Eigen::MatrixXd(4, 1), Eigen::MatrixXd(4, 1)};
  for (int j = 0; j < 4; ++j) {
    obs.x(j, 0) = rng.uniform();
    obs.y(j, 0) = 2.0 * 0.5 + sigma * rng.normal();
  }
  EPostConfig ec;
  ec.n_draws = 4000;
  ec.seed = 30;
  ec.workers = 1;
  const EPostResult e = epost_posterior({posterior_of(models, {sigma, sigma})}, normal_prior(), obs, ec);
  REQUIRE(e.draws.rows() == 8000);
  const double precision = 1.0 + 4 * 4.0 / (sigma * sigma);
  for (int k = 0; k < 2; ++k) {
    CAPTURE(k);
    const double a = k == 0 ? 0.0 : 3.0;
    const double mean = 2.0 * (obs.y.array() - a).sum() / (sigma * sigma) / precision;
    const Eigen::VectorXd part = e.draws.col(0).segment(k * 4000, 4000);
    CHECK(std::abs(part.mean() - mean) < 4 * chain_mean_se(part));
    CHECK(testing::sample_sd(part) == doctest::Approx(1.0 / std::sqrt(precision)).epsilon(0.1));
  }
  CHECK(std::abs(e.draws.col(0).head(4000).mean() - e.draws.col(0).tail(4000).mean()) > 1.0);
}

TEST_CASE("E-Post does not depend on the worker count") {
  const SurrogatePosterior post = logsin_posterior(31);
  RngStream rng(32);
  const ObservationSet obs = logsin_observations(1.2, rng);
  EPostConfig ec;
  ec.n_warmup = 200;
  ec.seed = 33;
  ec.max_surrogate_draws = 24;
  ec.workers = 1;
  const EPostResult one = epost_posterior({post}, logsin_prior(), obs, ec);
  ec.workers = 3;
  const EPostResult three = epost_posterior({post}, logsin_prior(), obs, ec);
  CHECK(one.draws.rows() == 96);
  CHECK(one.draws == three.draws);
  CHECK(one.n_failed == 0);
}

TEST_CASE("surrogate likelihood gradient matches finite differences") {
  const SurrogatePosterior post = logsin_posterior(34);
  RngStream rng(35);
  const ObservationSet obs = logsin_observations(1.0, rng);
  for (const PriorSpec& prior :
       {logsin_prior(), PriorSpec{{DistributionSpec::uniform(1, 200)}, {DistributionSpec::beta(2.4, 9)}},
        PriorSpec{{DistributionSpec::uniform(1, 200)}, {DistributionSpec::half_normal(1.0)}}}) {
    SurrogateLikelihood lik({post.basis}, {post.index_set}, prior, obs);
    lik.set_coefficients({post.coefficients(0)}, {post.sigma(0)});
    Eigen::MatrixXd pts(20, 1);
    for (Eigen::Index i = 0; i < 20; ++i) pts(i, 0) = rng.normal();
    CHECK(gradient_check(lik.target(), pts) < 1e-5);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 0.3);
    CHECK(lik.from_unconstrained(lik.to_unconstrained(w))(0) == doctest::Approx(0.3).epsilon(1e-12));
  }
}
