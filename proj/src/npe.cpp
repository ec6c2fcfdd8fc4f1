#include "uasabi/error.hpp"
#include "uasabi/neural.hpp"
#include "neural_detail.hpp"

#include <cmath>

namespace uasabi {
namespace {

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& sd) {
  if (m.cols() != mean.size())
    throw DimensionMismatch("standardize: width " + std::to_string(m.cols()) +
                            " does not match statistics width " + std::to_string(mean.size()));
  return ((m.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
}

/// Augmented standardized parameter matrix, one column per batch item.
Eigen::MatrixXd augmented_batch(const NpeModel& model, const Eigen::MatrixXd& omega,
                                const Eigen::MatrixXd& aux) {
  const auto& flow = model.spec.flow;
  const Eigen::Index n_aux = flow.augmented_dim - flow.param_dim;
  if (omega.cols() != flow.param_dim)
    throw DimensionMismatch("npe: parameter width " + std::to_string(omega.cols()) +
                            " does not match model dimension " + std::to_string(flow.param_dim));
  if (aux.cols() != n_aux || (n_aux > 0 && aux.rows() != omega.rows()))
    throw DimensionMismatch("npe: auxiliary draws have the wrong shape");
  Eigen::MatrixXd u(flow.augmented_dim, omega.rows());
  u.topRows(flow.param_dim) =
      standardize_rows(omega, model.stats.omega_mean, model.stats.omega_sd).transpose();
  if (n_aux > 0) u.bottomRows(n_aux) = aux.transpose();
  return u;
}

Eigen::MatrixXd replicate_summary(const Eigen::VectorXd& s, Eigen::Index n) {
  return s.replicate(1, n);
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

NpeSpec NpeSpec::make(int x_dim, int y_dim, int param_dim, const NpeArchitecture& arch) {
  if (x_dim < 0 || y_dim < 1 || param_dim < 1)
    throw InvalidParameter("npe: invalid input or parameter dimensions");
  NpeSpec s;
  s.x_dim = x_dim;
  s.y_dim = y_dim;
  s.param_dim = param_dim;
  s.deepset.element_net.hidden = arch.activation;
  s.deepset.element_net.widths.push_back(x_dim + y_dim);
  for (int h : arch.element_hidden) s.deepset.element_net.widths.push_back(h);
  s.deepset.element_net.widths.push_back(arch.element_out);
  s.deepset.post_net.hidden = arch.activation;
  s.deepset.post_net.widths.push_back(arch.element_out);
  for (int h : arch.post_hidden) s.deepset.post_net.widths.push_back(h);
  s.deepset.post_net.widths.push_back(arch.summary_dim);
  s.flow = CouplingFlowSpec::make(param_dim, arch.summary_dim, arch.coupling_blocks,
                                  arch.coupling_hidden, arch.clamp);
  s.flow.activation = arch.activation;
  return s;
}

NpeModel init_npe(const NpeSpec& spec, RngStream& rng) {
  NpeModel m;
  m.spec = spec;
  m.weights = Eigen::VectorXd::Zero(spec.n_params());
  const Eigen::Index ne = spec.deepset.element_net.n_params();
  const Eigen::Index np = spec.deepset.post_net.n_params();
  mlp_init(spec.deepset.element_net, m.weights.segment(0, ne), rng, false);
  mlp_init(spec.deepset.post_net, m.weights.segment(ne, np), rng, false);
  for (int k = 0; k < spec.flow.n_blocks; ++k) {
    const MlpSpec net = spec.flow.block_net(k);
    mlp_init(net, m.weights.segment(ne + np + spec.flow.block_offset(k), net.n_params()), rng, true);
  }
  m.stats.x_mean = Eigen::VectorXd::Zero(spec.x_dim);
  m.stats.x_sd = Eigen::VectorXd::Ones(spec.x_dim);
  m.stats.y_mean = Eigen::VectorXd::Zero(spec.y_dim);
  m.stats.y_sd = Eigen::VectorXd::Ones(spec.y_dim);
  m.stats.omega_mean = Eigen::VectorXd::Zero(spec.param_dim);
  m.stats.omega_sd = Eigen::VectorXd::Ones(spec.param_dim);
  return m;
}

ObservationSet standardize(const NpeModel& model, const ObservationSet& set) {
  set.validate();
  ObservationSet out;
  out.x = standardize_rows(set.x, model.stats.x_mean, model.stats.x_sd);
  out.y = standardize_rows(set.y, model.stats.y_mean, model.stats.y_sd);
  return out;
}

Eigen::VectorXd deepset_summary(const NpeModel& model, const ObservationSet& set) {
  return deepset_summary_batch(model.spec.deepset, model.element_weights(), model.post_weights(),
                               {standardize(model, set)})
      .col(0);
}

double npe_loss(const NpeModel& model, const std::vector<ObservationSet>& sets,
                const Eigen::MatrixXd& omega, const Eigen::MatrixXd& aux, Eigen::VectorXd* grad) {
  const auto batch = static_cast<Eigen::Index>(sets.size());
  if (batch == 0) throw InvalidParameter("npe_loss: empty batch");
  if (omega.rows() != batch) throw DimensionMismatch("npe_loss: one parameter row per set required");
  std::vector<ObservationSet> std_sets;
  std_sets.reserve(sets.size());
  for (const auto& s : sets) std_sets.push_back(standardize(model, s));
  const Eigen::MatrixXd u = augmented_batch(model, omega, aux);

  const auto& ds = model.spec.deepset;
  Eigen::MatrixXd elements;
  std::vector<Eigen::Index> offsets;
  detail::assemble_elements(std_sets, ds.element_net.in(), elements, offsets);
  MlpCache elem_cache, post_cache;
  const Eigen::MatrixXd h = mlp_apply(ds.element_net, model.element_weights(), elements, &elem_cache);
  const Eigen::MatrixXd pooled = detail::pool_mean(h, elements, offsets);
  const Eigen::MatrixXd summary = mlp_apply(ds.post_net, model.post_weights(), pooled, &post_cache);

  if (!grad) return -coupling_log_density(model.spec.flow, model.flow_weights(), u, summary).mean();

  grad->setZero(model.weights.size());
  const Eigen::Index ne = ds.element_net.n_params();
  const Eigen::Index np = ds.post_net.n_params();
  Eigen::MatrixXd g_summary;
  const double loss =
      coupling_nll_grad(model.spec.flow, model.flow_weights(), u, summary,
                        grad->segment(ne + np, model.spec.flow.n_params()), &g_summary);
  const Eigen::MatrixXd g_pooled =
      mlp_grad(ds.post_net, model.post_weights(), post_cache, g_summary, grad->segment(ne, np));
  Eigen::MatrixXd g_h(h.rows(), h.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index lo = offsets[static_cast<std::size_t>(b)];
    const Eigen::Index hi = offsets[static_cast<std::size_t>(b) + 1];
    const Eigen::VectorXd share = g_pooled.col(b) / static_cast<double>(hi - lo);
    for (Eigen::Index j = lo; j < hi; ++j) g_h.col(j) = share;
  }
  mlp_grad(ds.element_net, model.element_weights(), elem_cache, g_h, grad->segment(0, ne));
  return loss;
}

double flow_log_density(const NpeModel& model, const Eigen::VectorXd& omega,
                        const ObservationSet& set) {
  const auto& flow = model.spec.flow;
  if (omega.size() != flow.param_dim)
    throw DimensionMismatch("flow_log_density: parameter has " + std::to_string(omega.size()) +
                            " entries, model expects " + std::to_string(flow.param_dim));
  const Eigen::VectorXd s = deepset_summary(model, set);
  const double log_jac = model.stats.omega_sd.array().log().sum();
  const Eigen::Index n_aux = flow.augmented_dim - flow.param_dim;
  if (n_aux == 0) {
    const Eigen::MatrixXd u = augmented_batch(model, omega.transpose(), Eigen::MatrixXd(1, 0));
    return coupling_log_density(flow, model.flow_weights(), u, s).value() - log_jac;
  }

  // Integrate the auxiliary coordinate: a coarse scan locates the mass, then a
  // fine trapezoid grid covers it.
  const Eigen::VectorXd w = standardize_rows(omega.transpose(), model.stats.omega_mean,
                                             model.stats.omega_sd).transpose();
  auto eval_grid = [&](double lo, double hi, Eigen::Index n) {
    Eigen::MatrixXd u(flow.augmented_dim, n);
    u.topRows(flow.param_dim) = w.replicate(1, n);
    u.row(flow.param_dim) = Eigen::RowVectorXd::LinSpaced(n, lo, hi);
    return coupling_log_density(flow, model.flow_weights(), u, replicate_summary(s, n));
  };
  constexpr double kRange = 15.0;
  constexpr Eigen::Index kCoarse = 601;
  const Eigen::VectorXd coarse = eval_grid(-kRange, kRange, kCoarse);
  const double step = 2.0 * kRange / static_cast<double>(kCoarse - 1);
  const double peak = coarse.maxCoeff();
  Eigen::Index first = kCoarse, last = -1;
  for (Eigen::Index i = 0; i < kCoarse; ++i) {
    if (coarse(i) > peak - 40.0) {
      first = std::min(first, i);
      last = i;
    }
  }
  const double lo = -kRange + step * static_cast<double>(std::max<Eigen::Index>(first - 1, 0));
  const double hi = -kRange + step * static_cast<double>(std::min(last + 1, kCoarse - 1));
  constexpr Eigen::Index kFine = 2001;
  Eigen::VectorXd fine = eval_grid(lo, hi, kFine);
  const double h = (hi - lo) / static_cast<double>(kFine - 1);
  fine(0) += std::log(0.5);
  fine(kFine - 1) += std::log(0.5);
  return log_sum_exp(fine) + std::log(h) - log_jac;
}

Eigen::MatrixXd flow_sample(const NpeModel& model, const ObservationSet& set, Eigen::Index n,
                            RngStream& rng) {
  const auto& flow = model.spec.flow;
  const Eigen::VectorXd s = deepset_summary(model, set);
  Eigen::MatrixXd z(flow.augmented_dim, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
  const Eigen::MatrixXd u = coupling_inverse(flow, model.flow_weights(), z, replicate_summary(s, n));
  Eigen::MatrixXd out = u.topRows(flow.param_dim).transpose();
  out = (out.array().rowwise() * model.stats.omega_sd.transpose().array()).matrix();
  out.rowwise() += model.stats.omega_mean.transpose();
  return out;
}

}  // namespace uasabi
