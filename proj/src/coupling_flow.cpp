#include "uasabi/error.hpp"
#include "uasabi/neural.hpp"

#include <cmath>
#include <numbers>

namespace uasabi {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd gather(const Eigen::MatrixXd& u, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), u.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = u.row(rows[i]);
  return out;
}

Eigen::MatrixXd net_input(const Eigen::MatrixXd& u, const std::vector<int>& cond,
                          const Eigen::MatrixXd& summary) {
  Eigen::MatrixXd in(static_cast<Eigen::Index>(cond.size()) + summary.rows(), u.cols());
  in.topRows(static_cast<Eigen::Index>(cond.size())) = gather(u, cond);
  in.bottomRows(summary.rows()) = summary;
  return in;
}

struct BlockCache {
  MlpCache net;
  Eigen::MatrixXd squashed;  // tanh(raw_scale / clamp)
  Eigen::MatrixXd scaled;    // u_T * exp(s), before the shift
  Eigen::MatrixXd exp_s;
};

void check_inputs(const CouplingFlowSpec& spec, ConstParamsRef w, const Eigen::MatrixXd& u,
                  const Eigen::MatrixXd& summary) {
  if (w.size() != spec.n_params())
    throw DimensionMismatch("coupling flow: weight vector has " + std::to_string(w.size()) +
                            " entries, flow needs " + std::to_string(spec.n_params()));
  if (u.rows() != spec.augmented_dim)
    throw DimensionMismatch("coupling flow: input has " + std::to_string(u.rows()) +
                            " coordinates, flow expects " + std::to_string(spec.augmented_dim));
  if (summary.rows() != spec.summary_dim || summary.cols() != u.cols())
    throw DimensionMismatch("coupling flow: summary shape does not match batch");
}

/// Forward through every block; fills caches when given.
FlowResult forward_impl(const CouplingFlowSpec& spec, ConstParamsRef w, const Eigen::MatrixXd& omega,
                        const Eigen::MatrixXd& summary, std::vector<BlockCache>* caches) {
  check_inputs(spec, w, omega, summary);
  FlowResult r;
  r.z = omega;
  r.log_det = Eigen::VectorXd::Zero(omega.cols());
  if (caches) caches->assign(static_cast<std::size_t>(spec.n_blocks), {});
  for (int k = 0; k < spec.n_blocks; ++k) {
    const auto cond = spec.conditioners(k);
    const auto trans = spec.transformed(k);
    const auto nt = static_cast<Eigen::Index>(trans.size());
    const MlpSpec net = spec.block_net(k);
    BlockCache local;
    BlockCache& c = caches ? (*caches)[static_cast<std::size_t>(k)] : local;
    const Eigen::MatrixXd raw =
        mlp_apply(net, w.segment(spec.block_offset(k), net.n_params()),
                  net_input(r.z, cond, summary), &c.net);
    c.squashed = (raw.topRows(nt).array() / spec.clamp).tanh().matrix();
    const Eigen::MatrixXd s = spec.clamp * c.squashed;
    c.exp_s = s.array().exp().matrix();
    c.scaled = gather(r.z, trans).cwiseProduct(c.exp_s);
    const Eigen::MatrixXd out = c.scaled + raw.bottomRows(nt);
    for (Eigen::Index i = 0; i < nt; ++i) r.z.row(trans[static_cast<std::size_t>(i)]) = out.row(i);
    r.log_det += s.colwise().sum().transpose();
    if (!out.allFinite())
      throw NumericalOverflow("coupling block " + std::to_string(k) + " produced non-finite output");
  }
  return r;
}

}  // namespace

CouplingFlowSpec CouplingFlowSpec::make(int param_dim, int summary_dim, int n_blocks,
                                        std::vector<int> hidden, double clamp) {
  if (param_dim < 1) throw InvalidParameter("coupling flow: parameter dimension must be >= 1");
  if (n_blocks < 1) throw InvalidParameter("coupling flow: need at least one block");
  if (!(clamp > 0.0)) throw InvalidParameter("coupling flow: clamp must be > 0");
  CouplingFlowSpec s;
  s.param_dim = param_dim;
  s.augmented_dim = param_dim >= 2 ? param_dim : param_dim + 1;
  s.n_blocks = n_blocks;
  s.summary_dim = summary_dim;
  s.hidden = std::move(hidden);
  s.clamp = clamp;
  return s;
}

std::vector<int> CouplingFlowSpec::conditioners(int block) const {
  std::vector<int> out;
  for (int i = 0; i < augmented_dim; ++i)
    if ((i + block) % 2 == 0) out.push_back(i);
  return out;
}

std::vector<int> CouplingFlowSpec::transformed(int block) const {
  std::vector<int> out;
  for (int i = 0; i < augmented_dim; ++i)
    if ((i + block) % 2 != 0) out.push_back(i);
  return out;
}

MlpSpec CouplingFlowSpec::block_net(int block) const {
  MlpSpec m;
  m.hidden = activation;
  m.widths.push_back(static_cast<int>(conditioners(block).size()) + summary_dim);
  m.widths.insert(m.widths.end(), hidden.begin(), hidden.end());
  m.widths.push_back(2 * static_cast<int>(transformed(block).size()));
  return m;
}

Eigen::Index CouplingFlowSpec::block_offset(int block) const {
  Eigen::Index off = 0;
  for (int k = 0; k < block; ++k) off += block_net(k).n_params();
  return off;
}

Eigen::Index CouplingFlowSpec::n_params() const { return block_offset(n_blocks); }

FlowResult coupling_forward(const CouplingFlowSpec& spec, ConstParamsRef w,
                            const Eigen::MatrixXd& omega, const Eigen::MatrixXd& summary) {
  return forward_impl(spec, w, omega, summary, nullptr);
}

Eigen::MatrixXd coupling_inverse(const CouplingFlowSpec& spec, ConstParamsRef w,
                                 const Eigen::MatrixXd& z, const Eigen::MatrixXd& summary) {
  check_inputs(spec, w, z, summary);
  Eigen::MatrixXd u = z;
  for (int k = spec.n_blocks - 1; k >= 0; --k) {
    const auto cond = spec.conditioners(k);
    const auto trans = spec.transformed(k);
    const auto nt = static_cast<Eigen::Index>(trans.size());
    const MlpSpec net = spec.block_net(k);
    const Eigen::MatrixXd raw =
        mlp_apply(net, w.segment(spec.block_offset(k), net.n_params()), net_input(u, cond, summary));
    const Eigen::ArrayXXd s = spec.clamp * (raw.topRows(nt).array() / spec.clamp).tanh();
    const Eigen::MatrixXd out =
        ((gather(u, trans) - raw.bottomRows(nt)).array() * (-s).exp()).matrix();
    if (!out.allFinite())
      throw NumericalOverflow("coupling block " + std::to_string(k) +
                              " produced non-finite output in reverse");
    for (Eigen::Index i = 0; i < nt; ++i) u.row(trans[static_cast<std::size_t>(i)]) = out.row(i);
  }
  return u;
}

Eigen::VectorXd coupling_log_density(const CouplingFlowSpec& spec, ConstParamsRef w,
                                     const Eigen::MatrixXd& omega,
                                     const Eigen::MatrixXd& summary) {
  const FlowResult r = coupling_forward(spec, w, omega, summary);
  return (-0.5 * r.z.colwise().squaredNorm().array() - 0.5 * spec.augmented_dim * kLog2Pi)
             .matrix()
             .transpose() +
         r.log_det;
}

double coupling_nll_grad(const CouplingFlowSpec& spec, ConstParamsRef w,
                         const Eigen::MatrixXd& omega, const Eigen::MatrixXd& summary,
                         ParamsRef grad_w, Eigen::MatrixXd* grad_summary) {
  if (grad_w.size() != spec.n_params())
    throw DimensionMismatch("coupling flow: gradient buffer size mismatch");
  std::vector<BlockCache> caches;
  const FlowResult r = forward_impl(spec, w, omega, summary, &caches);
  const auto batch = static_cast<double>(omega.cols());
  const double loss =
      (0.5 * r.z.colwise().squaredNorm().sum() - r.log_det.sum()) / batch +
      0.5 * spec.augmented_dim * kLog2Pi;

  Eigen::MatrixXd g = r.z / batch;
  if (grad_summary) grad_summary->setZero(summary.rows(), summary.cols());
  for (int k = spec.n_blocks - 1; k >= 0; --k) {
    const auto cond = spec.conditioners(k);
    const auto trans = spec.transformed(k);
    const auto nt = static_cast<Eigen::Index>(trans.size());
    const auto nc = static_cast<Eigen::Index>(cond.size());
    const BlockCache& c = caches[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd g_out = gather(g, trans);
    // d loss / d s: through u_T * exp(s) and through -log_det / batch.
    const Eigen::ArrayXXd g_s = g_out.array() * c.scaled.array() - 1.0 / batch;
    Eigen::MatrixXd g_raw(2 * nt, g.cols());
    g_raw.topRows(nt) = (g_s * (1.0 - c.squashed.array().square())).matrix();
    g_raw.bottomRows(nt) = g_out;
    const MlpSpec net = spec.block_net(k);
    const Eigen::Index off = spec.block_offset(k);
    const Eigen::MatrixXd g_in = mlp_grad(net, w.segment(off, net.n_params()), c.net, g_raw,
                                          grad_w.segment(off, net.n_params()));
    for (Eigen::Index i = 0; i < nt; ++i)
      g.row(trans[static_cast<std::size_t>(i)]) = g_out.row(i).cwiseProduct(c.exp_s.row(i));
    for (Eigen::Index i = 0; i < nc; ++i) g.row(cond[static_cast<std::size_t>(i)]) += g_in.row(i);
    if (grad_summary) *grad_summary += g_in.bottomRows(summary.rows());
  }
  return loss;
}

}  // namespace uasabi
