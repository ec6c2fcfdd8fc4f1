#include "support.hpp"

#include "uasabi/error.hpp"
#include "uasabi/mcmc.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <limits>

using namespace uasabi;

namespace {

TargetDensity gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd prec = cov.inverse();
  TargetDensity t;
  t.dim = static_cast<int>(mu.size());
  t.log_density_grad = [mu, prec](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    const Eigen::VectorXd d = q - mu;
    g = -prec * d;
    return -0.5 * d.dot(prec * d);
  };
  return t;
}

TargetDensity standard_normal() { return gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)); }

McmcConfig config(std::uint64_t seed) {
  McmcConfig c;
  c.n_chains = 4;
  c.n_warmup = 1000;
  c.n_draws = 1000;
  c.seed = seed;
  c.workers = 1;
  return c;
}

std::vector<Eigen::VectorXd> iid_chains(int chains, int n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < chains; ++c) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("standard normal target") {
  const ChainOutput out = hmc_sample(standard_normal(), config(1));
  const Eigen::VectorXd x = out.pooled().col(0);
  REQUIRE(x.size() == 4000);
  CHECK(std::abs(x.mean()) < 0.05);
  CHECK(std::abs(testing::sample_sd(x) - 1.0) < 0.05);
  CHECK(std::abs(x.mean()) < 4.0 / std::sqrt(out.ess(0)));
  CHECK(out.rhat(0) < 1.01);
  for (Eigen::Index c = 0; c < out.accept_rate.size(); ++c) {
    CHECK(out.accept_rate(c) >= 0.0);
    CHECK(out.accept_rate(c) <= 1.0);
    CHECK(out.accept_rate(c) > 0.6);
  }
  CHECK(x.allFinite());
}

TEST_CASE("shifted and scaled normal target") {
  const ChainOutput out =
      hmc_sample(gaussian(Eigen::VectorXd::Constant(1, 3.0), Eigen::MatrixXd::Constant(1, 1, 4.0)), config(2));
  CHECK(std::abs(out.pooled().col(0).mean() - 3.0) < 0.1);
}

TEST_CASE("correlated bivariate normal target") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.9, 0.9, 1.0;
  const Eigen::MatrixXd d = hmc_sample(gaussian(Eigen::Vector2d::Zero(), cov), config(3)).pooled();
  const Eigen::MatrixXd centered = d.rowwise() - d.colwise().mean();
  const Eigen::MatrixXd s = centered.transpose() * centered / static_cast<double>(d.rows() - 1);
  CHECK(std::abs(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)) - 0.9) < 0.05);
}

TEST_CASE("pooled draws pass KS against the normal CDF for three seeds") {
  for (std::uint64_t seed : {11, 12, 13}) {
    CAPTURE(seed);
    const Eigen::VectorXd x = hmc_sample(standard_normal(), config(seed)).pooled().col(0);
    CHECK(testing::ks_pvalue(testing::to_vector(x), normal_cdf) > 0.001);
  }
}

TEST_CASE("identical seeds give identical draws regardless of workers") {
  McmcConfig a = config(21), b = config(21);
  b.workers = 3;
  const ChainOutput x = hmc_sample(standard_normal(), a), y = hmc_sample(standard_normal(), b);
  CHECK(x.pooled() == y.pooled());
  McmcConfig c = config(22);
  CHECK(hmc_sample(standard_normal(), c).pooled() != x.pooled());
}

TEST_CASE("thinning keeps the requested number of draws") {
  McmcConfig c = config(4);
  c.n_draws = 250;
  c.thin = 4;
  const ChainOutput out = hmc_sample(standard_normal(), c);
  REQUIRE(out.draws.size() == 4);
  CHECK(out.draws[0].rows() == 250);
}

TEST_CASE("initialization failure") {
  TargetDensity bad;
  bad.dim = 1;
  bad.log_density_grad = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g.setZero();
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(hmc_sample(bad, config(1)), InitializationFailure);
}

TEST_CASE("r-hat") {
  CHECK(rhat(iid_chains(4, 1000, 5)) < 1.01);

  Eigen::VectorXd seq(4);
  seq << 1, 2, 3, 4;
  CHECK(basic_rhat({seq, seq}, false) <= 1.0 + 1e-9);

  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4), fives = Eigen::VectorXd::Constant(4, 5.0);
  CHECK(rhat({zeros, fives}) > 1.2);
  CHECK(basic_rhat({zeros, fives}, false) > 1.2);

  CHECK_THROWS_AS(rhat({seq}), InsufficientChains);
  CHECK_THROWS_AS(ess({seq}), InsufficientChains);
}

TEST_CASE("effective sample size") {
  const double iid = ess(iid_chains(4, 1000, 6));
  CHECK(iid >= 2000);
  CHECK(iid <= 6000);

  RngStream rng(8);
  std::vector<Eigen::VectorXd> ar;
  const double phi = 0.9;
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd v(1000);
    double prev = rng.normal() / std::sqrt(1 - phi * phi);
    for (int i = 0; i < 1000; ++i) v(i) = prev = phi * prev + rng.normal();
    ar.push_back(v);
  }
  const double expected = 4000 * (1 - phi) / (1 + phi);
  const double got = ess(ar);
  CHECK(got > expected / 2);
  CHECK(got < expected * 2);

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(100, 2.0);
  const double constant = ess({flat, flat});
  CHECK((std::isnan(constant) || constant == 0.0));
}

TEST_CASE("dual averaging settles where the acceptance statistic meets the target") {
  // Acceptance exp(-step^2) meets 0.8 at step = sqrt(-log 0.8).
  DualAveraging da(1.0, 0.8);
  double step = 1.0;
  for (int i = 0; i < 5000; ++i) step = da.update(std::exp(-step * step));
  const double target = std::sqrt(-std::log(0.8));
  CHECK(da.final_step() == doctest::Approx(target).epsilon(0.02));
}

TEST_CASE("gradient check of a known target") {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.3, 0.3, 0.5;
  const TargetDensity t = gaussian(Eigen::Vector2d(1.0, -1.0), cov);
  RngStream rng(1);
  Eigen::MatrixXd pts(20, 2);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = 3 * rng.normal();
  CHECK(gradient_check(t, pts) < 1e-5);
}
