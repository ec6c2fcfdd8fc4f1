#include "support.hpp"

#include "uasabi/error.hpp"
#include "uasabi/neural.hpp"

#include <doctest.h>

#include <cmath>

using namespace uasabi;

namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

Eigen::VectorXd random_vector(Eigen::Index n, RngStream& rng, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

ObservationSet random_set(Eigen::Index n, RngStream& rng) {
  return {random_matrix(n, 1, rng), random_matrix(n, 1, rng)};
}

// Model with random summary weights and random (non-identity) flow weights.
NpeModel random_model(int param_dim, RngStream& rng, double flow_scale) {
  NpeModel m = init_npe(NpeSpec::make(1, 1, param_dim), rng);
  const auto offset = m.spec.deepset.n_params();
  m.weights.segment(offset, m.spec.flow.n_params()) = random_vector(m.spec.flow.n_params(), rng, flow_scale);
  return m;
}

}  // namespace

TEST_CASE("mlp with a zero final layer outputs zero") {
  const MlpSpec spec{{3, 8, 8, 2}, Activation::Tanh};
  RngStream rng(1);
  Eigen::VectorXd w(spec.n_params());
  mlp_init(spec, w, rng, true);
  CHECK(mlp_apply(spec, w, random_matrix(3, 5, rng)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single linear layer") {
  const MlpSpec spec{{3, 2}, Activation::Tanh};
  RngStream rng(2);
  const Eigen::MatrixXd W = random_matrix(2, 3, rng);
  const Eigen::Vector2d b(0.5, -1.5);
  Eigen::VectorXd w(spec.n_params());
  w << Eigen::Map<const Eigen::VectorXd>(W.data(), 6), b;
  const Eigen::Vector3d x(1.0, -2.0, 0.25);
  MlpCache cache;
  const Eigen::MatrixXd out = mlp_apply(spec, w, x, &cache);
  CHECK((out - (W * x + b)).norm() < 1e-14);

  const Eigen::Vector2d delta(0.3, -0.7);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.n_params());
  const Eigen::MatrixXd dx = mlp_grad(spec, w, cache, delta, grad);
  const Eigen::MatrixXd outer = delta * x.transpose();
  CHECK((Eigen::Map<const Eigen::MatrixXd>(grad.data(), 2, 3) - outer).norm() < 1e-14);
  CHECK((grad.tail(2) - delta).norm() < 1e-14);
  CHECK((dx - W.transpose() * delta).norm() < 1e-14);

  CHECK_THROWS_AS(mlp_apply(spec, w, Eigen::Vector2d(1, 2)), DimensionMismatch);
}

TEST_CASE("mlp gradients match finite differences") {
  RngStream rng(3);
  for (const Activation act : {Activation::Tanh, Activation::Relu}) {
    CAPTURE(to_string(act));
    const MlpSpec spec{{3, 6, 5, 2}, act};
    double worst_w = 0.0, worst_x = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd w = random_vector(spec.n_params(), rng, 0.7);
      const Eigen::MatrixXd x = random_matrix(3, 4, rng);
      const Eigen::MatrixXd r = random_matrix(2, 4, rng);
      MlpCache cache;
      mlp_apply(spec, w, x, &cache);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.n_params());
      const Eigen::MatrixXd dx = mlp_grad(spec, w, cache, r, grad);

      auto fw = [&](const Eigen::VectorXd& v) { return (r.array() * mlp_apply(spec, v, x).array()).sum(); };
      worst_w = std::max(worst_w, testing::max_relative_error(grad, testing::numeric_gradient(fw, w)));
      const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
      auto fx = [&](const Eigen::VectorXd& v) {
        return (r.array() * mlp_apply(spec, w, Eigen::Map<const Eigen::MatrixXd>(v.data(), 3, 4)).array()).sum();
      };
      const Eigen::VectorXd dxv = Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size());
      worst_x = std::max(worst_x, testing::max_relative_error(dxv, testing::numeric_gradient(fx, xv)));
    }
    CHECK(worst_w < 1e-5);
    CHECK(worst_x < 1e-5);
  }
}

TEST_CASE("deep set summary") {
  RngStream rng(4);
  const NpeModel m = init_npe(NpeSpec::make(1, 1, 1), rng);
  const auto& spec = m.spec.deepset;
  CHECK(spec.summary_dim() == 10);
  const ObservationSet set = random_set(5, rng);

  ObservationSet permuted = set;
  const std::vector<int> order{3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i) {
    permuted.x.row(i) = set.x.row(order[i]);
    permuted.y.row(i) = set.y.row(order[i]);
  }
  const Eigen::MatrixXd s = deepset_summary_batch(spec, m.element_weights(), m.post_weights(), {set, permuted});
  CHECK(s.col(0) == s.col(1));

  const ObservationSet single{set.x.topRows(1), set.y.topRows(1)};
  const ObservationSet doubled{set.x.topRows(1).replicate(2, 1), set.y.topRows(1).replicate(2, 1)};
  const Eigen::MatrixXd d = deepset_summary_batch(spec, m.element_weights(), m.post_weights(), {single, doubled});
  CHECK(d.col(0) == d.col(1));

  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(spec.n_params());
  const Eigen::MatrixXd z = deepset_summary_batch(spec, zeros.head(spec.element_net.n_params()),
                                                  zeros.tail(spec.post_net.n_params()), {set});
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);

  const ObservationSet empty{Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 1)};
  CHECK_THROWS_AS(deepset_summary(m, empty), EmptySet);
}

TEST_CASE("identity flow") {
  RngStream rng(5);
  const NpeModel m = init_npe(NpeSpec::make(1, 1, 1), rng);
  const auto& flow = m.spec.flow;
  CHECK(flow.augmented_dim == 2);
  const Eigen::MatrixXd omega = random_matrix(2, 50, rng);
  const Eigen::MatrixXd s = random_matrix(10, 50, rng);
  const FlowResult r = coupling_forward(flow, m.flow_weights(), omega, s);
  CHECK(r.z == omega);
  CHECK(r.log_det.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd lq = coupling_log_density(flow, m.flow_weights(), omega, s);
  for (Eigen::Index b = 0; b < 50; ++b)
    CHECK(std::abs(lq(b) - (-kLog2Pi - 0.5 * omega.col(b).squaredNorm())) < 1e-12);

  const ObservationSet set = random_set(4, rng);
  CHECK(flow_log_density(m, Eigen::VectorXd::Zero(1), set) == doctest::Approx(-0.9189385).epsilon(1e-7));

  double integral = 0.0;
  const int n = 1600;
  const double h = 16.0 / n;
  for (int k = 0; k <= n; ++k) {
    const double v = -8.0 + k * h;
    integral += (k == 0 || k == n ? 0.5 : 1.0) * h * std::exp(flow_log_density(m, Eigen::VectorXd::Constant(1, v), set));
  }
  CHECK(std::abs(integral - 1.0) < 1e-3);

  const Eigen::MatrixXd draws = flow_sample(m, set, 20000, rng);
  const Eigen::VectorXd d0 = draws.col(0);
  CHECK(std::abs(d0.mean()) < 4.0 / std::sqrt(20000.0));
  CHECK(testing::sample_sd(d0) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("random flows invert exactly") {
  RngStream rng(6);
  for (int q : {1, 2, 3}) {
    CAPTURE(q);
    const NpeModel m = random_model(q, rng, 0.3);
    const auto& flow = m.spec.flow;
    const Eigen::MatrixXd omega = random_matrix(flow.augmented_dim, 1000, rng, 2.0);
    const Eigen::MatrixXd s = random_matrix(flow.summary_dim, 1000, rng);
    const FlowResult r = coupling_forward(flow, m.flow_weights(), omega, s);
    const Eigen::MatrixXd back = coupling_inverse(flow, m.flow_weights(), r.z, s);
    CHECK((back - omega).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.log_det.cwiseAbs().maxCoeff() <= flow.n_blocks * flow.augmented_dim * flow.clamp);
  }
}

TEST_CASE("every coordinate is transformed by some block") {
  for (int q : {1, 2, 3, 5}) {
    const CouplingFlowSpec f = CouplingFlowSpec::make(q, 10);
    std::vector<bool> seen(static_cast<std::size_t>(f.augmented_dim), false);
    for (int k = 0; k < f.n_blocks; ++k)
      for (int i : f.transformed(k)) seen[static_cast<std::size_t>(i)] = true;
    for (bool b : seen) CHECK(b);
  }
}

TEST_CASE("random two-dimensional flows are normalized") {
  RngStream rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    CAPTURE(trial);
    const NpeModel m = random_model(1, rng, 0.3);
    const Eigen::MatrixXd s = random_matrix(10, 1, rng);
    // Six-sigma box of the flow's own distribution, from its samples.
    const Eigen::MatrixXd w =
        coupling_inverse(m.spec.flow, m.flow_weights(), random_matrix(2, 20000, rng), s.replicate(1, 20000));
    const Eigen::Vector2d mean = w.rowwise().mean();
    const Eigen::Vector2d sd = ((w.colwise() - mean).rowwise().squaredNorm() / 19999.0).cwiseSqrt();
    const Eigen::Vector2d lo = mean - 6 * sd, h = 12 * sd / 400;
    const int n = 400;
    Eigen::MatrixXd grid(2, (n + 1) * (n + 1));
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) grid.col(i * (n + 1) + j) << lo(0) + i * h(0), lo(1) + j * h(1);
    const Eigen::VectorXd lq = coupling_log_density(m.spec.flow, m.flow_weights(), grid, s.replicate(1, grid.cols()));
    double integral = 0.0;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double wi = (i == 0 || i == n) ? 0.5 : 1.0, wj = (j == 0 || j == n) ? 0.5 : 1.0;
        integral += wi * wj * h(0) * h(1) * std::exp(lq(i * (n + 1) + j));
      }
    CHECK(std::abs(integral - 1.0) < 1e-2);
  }
}

TEST_CASE("flow sampler agrees with flow density") {
  RngStream rng(8);
  const NpeModel m = random_model(1, rng, 0.3);
  const ObservationSet set = random_set(4, rng);
  const Eigen::MatrixXd draws = flow_sample(m, set, 10000, rng);
  const Eigen::VectorXd d0 = draws.col(0);
  const double lo = d0.mean() - 8 * testing::sample_sd(d0), hi = d0.mean() + 8 * testing::sample_sd(d0);
  const int n = 1200;
  const double h = (hi - lo) / n;
  std::vector<double> cdf(n + 1, 0.0);
  double prev = std::exp(flow_log_density(m, Eigen::VectorXd::Constant(1, lo), set));
  for (int k = 1; k <= n; ++k) {
    const double cur = std::exp(flow_log_density(m, Eigen::VectorXd::Constant(1, lo + k * h), set));
    cdf[k] = cdf[k - 1] + 0.5 * h * (prev + cur);
    prev = cur;
  }
  CHECK(std::abs(cdf.back() - 1.0) < 1e-2);
  auto F = [&](double v) {
    const double t = (v - lo) / h;
    if (t <= 0) return 0.0;
    if (t >= n) return 1.0;
    const auto k = static_cast<int>(t);
    return (cdf[k] + (t - k) * (cdf[k + 1] - cdf[k])) / cdf.back();
  };
  CHECK(testing::ks_pvalue(testing::to_vector(d0), F) > 0.001);
}

TEST_CASE("non-finite flow input names the block") {
  RngStream rng(9);
  const NpeModel m = random_model(2, rng, 0.3);
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2, 1);
  omega(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(coupling_forward(m.spec.flow, m.flow_weights(), omega, Eigen::MatrixXd::Zero(10, 1)),
                       doctest::Contains("block"), NumericalOverflow);
}

TEST_CASE("loss equals the negative mean log density") {
  RngStream rng(10);
  const NpeModel m = init_npe(NpeSpec::make(1, 1, 1), rng);
  const std::vector<ObservationSet> sets{random_set(4, rng), random_set(4, rng)};
  Eigen::MatrixXd omega(2, 1), aux(2, 1);
  omega << 0.3, -1.2;
  aux << 0.5, 0.1;
  const double expected = 0.5 * ((0.09 + 0.25) + (1.44 + 0.01)) / 2.0 + kLog2Pi;
  CHECK(npe_loss(m, sets, omega, aux, nullptr) == doctest::Approx(expected).epsilon(1e-14));

  const NpeModel r = random_model(1, rng, 0.3);
  Eigen::MatrixXd both(2, 2);
  both << omega, aux;
  const Eigen::MatrixXd s = deepset_summary_batch(r.spec.deepset, r.element_weights(), r.post_weights(), sets);
  const Eigen::VectorXd lq = coupling_log_density(r.spec.flow, r.flow_weights(), both.transpose(), s);
  CHECK(npe_loss(r, sets, omega, aux, nullptr) == doctest::Approx(-lq.mean()).epsilon(1e-14));
}

TEST_CASE("end-to-end loss gradient matches finite differences") {
  RngStream rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int q = 1 + trial % 2;
    NpeModel m = random_model(q, rng, 0.2);
    m.stats.omega_mean = random_vector(q, rng, 1.0);
    m.stats.omega_sd = Eigen::VectorXd::Constant(q, 0.7);
    const std::vector<ObservationSet> sets{random_set(4, rng), random_set(3, rng), random_set(4, rng)};
    const Eigen::MatrixXd omega = random_matrix(3, q, rng);
    const Eigen::MatrixXd aux = random_matrix(3, m.spec.flow.augmented_dim - q, rng);
    Eigen::VectorXd grad;
    npe_loss(m, sets, omega, aux, &grad);
    auto f = [&](const Eigen::VectorXd& w) {
      NpeModel c = m;
      c.weights = w;
      return npe_loss(c, sets, omega, aux, nullptr);
    };
    worst = std::max(worst, testing::max_relative_error(grad, testing::numeric_gradient(f, m.weights)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("adam and cosine schedule") {
  AdamState st(1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  adam_step(st, p, Eigen::VectorXd::Ones(1), 0.1);
  CHECK(std::abs(p(0) + 0.1) < 1e-7);
  CHECK(st.step == 1);

  CHECK(cosine_lr(0, 12800, 5e-4, 1e-6) == doctest::Approx(5.0e-4).epsilon(1e-12));
  CHECK(cosine_lr(12800, 12800, 5e-4, 1e-6) == doctest::Approx(5.0e-10).epsilon(1e-9));
  CHECK(cosine_lr(6400, 12800, 5e-4, 1e-6) == doctest::Approx(5e-4 * 1e-6 + 0.5 * 5e-4 * (1 - 1e-6)).epsilon(1e-12));
  CHECK(cosine_lr(20000, 12800, 5e-4, 1e-6) == cosine_lr(12800, 12800, 5e-4, 1e-6));
}
