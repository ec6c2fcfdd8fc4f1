#include "support.hpp"

#include "uasabi/error.hpp"
#include "uasabi/numerics.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace uasabi;

namespace {

double star_discrepancy_2d(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  std::vector<double> us{1.0}, vs{1.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    us.push_back(p(i, 0));
    vs.push_back(p(i, 1));
  }
  double d = 0.0;
  for (double u : us)
    for (double v : vs) {
      int open = 0, closed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        open += p(i, 0) < u && p(i, 1) < v;
        closed += p(i, 0) <= u && p(i, 1) <= v;
      }
      d = std::max({d, u * v - static_cast<double>(open) / n, static_cast<double>(closed) / n - u * v});
    }
  return d;
}

// CDF obtained by trapezoidal integration of exp(logpdf) on [lo, hi].
std::function<double(double)> integrated_cdf(const DistributionSpec& d, double lo, double hi) {
  const int m = 40000;
  const double h = (hi - lo) / m;
  auto grid = std::make_shared<std::vector<double>>(m + 1, 0.0);
  double prev = std::exp(d.logpdf(lo));
  for (int k = 1; k <= m; ++k) {
    double cur = std::exp(d.logpdf(lo + k * h));
    if (!std::isfinite(cur)) cur = 0.0;
    if (!std::isfinite(prev)) prev = 0.0;
    (*grid)[k] = (*grid)[k - 1] + 0.5 * h * (prev + cur);
    prev = cur;
  }
  const double total = grid->back();
  return [grid, lo, h, m, total](double v) {
    const double t = (v - lo) / h;
    if (t <= 0) return 0.0;
    if (t >= m) return 1.0;
    const auto k = static_cast<int>(t);
    return ((*grid)[k] + (t - k) * ((*grid)[k + 1] - (*grid)[k])) / total;
  };
}

}  // namespace

TEST_CASE("rng streams are reproducible and children ignore parent state") {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next() == b.next());

  RngStream fresh(42, 7);
  const auto c0 = fresh.child(3).next();
  for (int i = 0; i < 50; ++i) fresh.next();
  CHECK(fresh.child(3).next() == c0);
  CHECK(fresh.child(4).next() != c0);
  CHECK(RngStream(43, 7).next() != RngStream(42, 7).next());

  RngStream u(1);
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("sobol points") {
  const Eigen::MatrixXd origin = sobol_points(2, 1, false);
  CHECK(origin(0, 0) == 0.0);
  CHECK(origin(0, 1) == 0.0);

  const Eigen::MatrixXd first = sobol_points(2, 1);
  CHECK(first(0, 0) == 0.5);
  CHECK(first(0, 1) == 0.5);

  SUBCASE("nesting") {
    const Eigen::MatrixXd a = sobol_points(5, 40);
    const Eigen::MatrixXd b = sobol_points(5, 100);
    CHECK(b.topRows(40) == a);
  }

  SUBCASE("16 points beat the average i.i.d. star discrepancy") {
    const double sobol = star_discrepancy_2d(sobol_points(2, 16));
    double iid = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      RngStream rng(s);
      Eigen::MatrixXd p(16, 2);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
      iid += star_discrepancy_2d(p) / 100.0;
    }
    CHECK(sobol < iid);
  }

  CHECK_THROWS_AS(sobol_points(kMaxSobolDim + 1, 4), UnsupportedDimension);
}

TEST_CASE("scale_to_box") {
  const std::vector<std::pair<double, double>> box{{1, 200}, {0.6, 1.4}};
  Eigen::MatrixXd p(3, 2);
  p << 0.5, 0.5, 0.0, 0.0, 1.0 - 1e-12, 1.0 - 1e-12;
  const Eigen::MatrixXd s = scale_to_box(p, box);
  CHECK(s(0, 0) == doctest::Approx(100.5).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s(1, 0) == 1.0);
  CHECK(s(1, 1) == 0.6);
  CHECK(s(2, 0) == doctest::Approx(200.0).epsilon(1e-9));
  CHECK(s(2, 1) == doctest::Approx(1.4).epsilon(1e-9));
}

TEST_CASE("log densities") {
  CHECK(DistributionSpec::normal(0, 1).logpdf(0) == doctest::Approx(-0.9189385).epsilon(1e-7));
  CHECK(DistributionSpec::normal(1, 0.2).logpdf(1) == doctest::Approx(0.6904993).epsilon(1e-7));
  const double out = DistributionSpec::half_normal(0.5).logpdf(-0.1);
  CHECK(std::isinf(out));
  CHECK(out < 0);
  CHECK(dist_logpdf(DistributionSpec::uniform(0, 2), 1.0) == doctest::Approx(std::log(0.5)));
  CHECK_THROWS_AS(DistributionSpec::normal(0, 0), InvalidParameter);
  CHECK_THROWS_AS(DistributionSpec::uniform(1, 1), InvalidParameter);
  CHECK_THROWS_AS(DistributionSpec::beta(-1, 2), InvalidParameter);
}

TEST_CASE("log density derivatives match finite differences") {
  const std::vector<std::pair<DistributionSpec, double>> cases{
      {DistributionSpec::normal(1, 0.2), 1.13},
      {DistributionSpec::half_normal(0.5), 0.4},
      {DistributionSpec::beta(2.4, 9), 0.3},
      {DistributionSpec::scaled_beta(2, 3, 1, 2), 1.7}};
  for (const auto& [d, v] : cases) {
    const double h = 1e-6;
    const double fd = (d.logpdf(v + h) - d.logpdf(v - h)) / (2 * h);
    CHECK(d.dlogpdf(v) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("sample moments") {
  RngStream rng(2024);
  const int n = 100000;
  double s = 0.0;
  const auto normal = DistributionSpec::normal(1, 0.2);
  for (int i = 0; i < n; ++i) s += dist_sample(normal, rng);
  CHECK(s / n >= 0.9975);
  CHECK(s / n <= 1.0025);

  s = 0.0;
  const auto beta = DistributionSpec::beta(2.4, 9);
  for (int i = 0; i < n; ++i) s += beta.sample(rng);
  CHECK(std::abs(s / n - 2.4 / 11.4) < 0.002);

  const auto unit = DistributionSpec::uniform(0, 1);
  for (int i = 0; i < n; ++i) {
    const double v = unit.sample(rng);
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("samples agree with the integrated density (KS at 0.001)") {
  struct Case {
    DistributionSpec d;
    double lo, hi;
  };
  const std::vector<Case> cases{{DistributionSpec::normal(1, 0.2), -1.4, 3.4},
                                {DistributionSpec::half_normal(0.5), 0.0, 6.0},
                                {DistributionSpec::uniform(1, 200), 1.0, 200.0},
                                {DistributionSpec::beta(2.4, 9), 0.0, 1.0},
                                {DistributionSpec::scaled_beta(2, 3, 1, 2), 1.0, 3.0}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    CAPTURE(c.d.describe());
    RngStream rng(seed++);
    std::vector<double> draws(10000);
    for (double& v : draws) v = c.d.sample(rng);
    CHECK(testing::ks_pvalue(draws, integrated_cdf(c.d, c.lo, c.hi)) > 0.001);
  }
}

TEST_CASE("closed-form moments match Monte Carlo") {
  RngStream rng(5);
  for (const auto& d : {DistributionSpec::half_normal(0.5), DistributionSpec::scaled_beta(2, 3, 1, 2)}) {
    CAPTURE(d.describe());
    const int n = 200000;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = d.sample(rng);
    CHECK(std::abs(v.mean() - d.mean()) < 4.0 * d.sd() / std::sqrt(n));
    CHECK(testing::sample_sd(v) == doctest::Approx(d.sd()).epsilon(0.01));
  }
}

TEST_CASE("normal cdf and quantile are inverse") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  for (double p : {1e-10, 0.001, 0.3, 0.5, 0.9, 0.999999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}
