#include "uasabi/surrogate.hpp"

#include "uasabi/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace uasabi {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::VectorXd concat_point(const Eigen::VectorXd& x, const Eigen::VectorXd& omega) {
  Eigen::VectorXd p(x.size() + omega.size());
  p << x, omega;
  return p;
}

}  // namespace

void SurrogateTrainingSet::validate() const {
  if (inputs.rows() != y.size())
    throw DimensionMismatch("training set: input rows and outputs differ in count");
  if (x_dim < 0 || x_dim > inputs.cols())
    throw DimensionMismatch("training set: x_dim exceeds input width");
  if (!inputs.allFinite() || !y.allFinite())
    throw InvalidParameter("training set: non-finite values");
}

std::uint64_t SurrogateTrainingSet::digest() const {
  std::uint64_t h = fnv1a(inputs.data(), sizeof(double) * static_cast<std::size_t>(inputs.size()));
  h = fnv1a(y.data(), sizeof(double) * static_cast<std::size_t>(y.size()), h);
  return fnv1a(&x_dim, sizeof(x_dim), h);
}

void SurrogatePosterior::validate() const {
  if (draws.cols() != static_cast<Eigen::Index>(index_set.size()) + 1)
    throw DimensionMismatch("surrogate posterior: draw width does not match basis");
  if (draws.rows() > 0 && !(draws.col(draws.cols() - 1).array() > 0.0).all())
    throw InvalidParameter("surrogate posterior: non-positive sigma draw");
}

SurrogateLogPosterior surrogate_log_posterior(const Eigen::VectorXd& c, double sigma,
                                              const SurrogateTrainingSet& data,
                                              const BasisSpec& basis,
                                              const MultiIndexSet& set,
                                              const SurrogatePrior& prior) {
  if (!(sigma > 0.0)) throw DomainError("surrogate_log_posterior: sigma must be > 0");
  if (static_cast<std::size_t>(c.size()) != set.size())
    throw DimensionMismatch("surrogate_log_posterior: coefficient length mismatch");
  const Eigen::MatrixXd psi = design_matrix(basis, set, data.inputs);
  const Eigen::VectorXd resid = data.y - psi * c;
  const auto n = static_cast<double>(data.size());
  SurrogateLogPosterior out;
  const double s2 = sigma * sigma;
  out.log_likelihood = -0.5 * resid.squaredNorm() / s2 - n * (std::log(sigma) + kHalfLog2Pi);
  out.gradient.resize(c.size() + 1);
  out.gradient.head(c.size()) = psi.transpose() * resid / s2;
  for (Eigen::Index d = 0; d < c.size(); ++d) {
    out.log_prior += prior.coef_prior.logpdf(c(d));
    out.gradient(d) += prior.coef_prior.dlogpdf(c(d));
  }
  out.log_prior += prior.sigma_prior.logpdf(sigma);
  out.log_jacobian = std::log(sigma);
  out.gradient(c.size()) =
      resid.squaredNorm() / s2 - n + prior.sigma_prior.dlogpdf(sigma) * sigma + 1.0;
  return out;
}

TargetDensity surrogate_target(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                               const SurrogatePrior& prior) {
  const auto k = static_cast<int>(design.cols());
  const bool fixed = prior.fixed_sigma.has_value();
  if (fixed && !(*prior.fixed_sigma > 0.0))
    throw InvalidParameter("surrogate prior: fixed sigma must be > 0");
  TargetDensity t;
  t.dim = fixed ? k : k + 1;
  for (int d = 0; d < k; ++d) t.names.push_back("c_" + std::to_string(d));
  if (!fixed) t.names.emplace_back("log_sigma");
  const double n = static_cast<double>(y.size());
  t.log_density_grad = [=](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    const auto c = q.head(k);
    double log_sigma, sigma;
    if (fixed) {
      sigma = *prior.fixed_sigma;
      log_sigma = std::log(sigma);
    } else {
      log_sigma = q(k);
      sigma = std::exp(log_sigma);
    }
    const double s2 = sigma * sigma;
    const Eigen::VectorXd resid = y - design * c;
    const double rss = resid.squaredNorm();
    double lp = -0.5 * rss / s2 - n * log_sigma;
    grad.resize(q.size());
    grad.head(k) = design.transpose() * resid / s2;
    for (int d = 0; d < k; ++d) {
      lp += prior.coef_prior.logpdf(c(d));
      grad(d) += prior.coef_prior.dlogpdf(c(d));
    }
    if (!fixed) {
      lp += prior.sigma_prior.logpdf(sigma) + log_sigma;
      grad(k) = rss / s2 - n + prior.sigma_prior.dlogpdf(sigma) * sigma + 1.0;
    }
    return lp;
  };
  return t;
}

SurrogatePosterior fit_surrogate(const SurrogateTrainingSet& data, const BasisSpec& basis,
                                 const MultiIndexSet& set, const SurrogatePrior& prior,
                                 const McmcConfig& mcmc, const FitOptions& options) {
  data.validate();
  if (data.input_dim() != set.dim)
    throw DimensionMismatch("fit_surrogate: training inputs have " +
                            std::to_string(data.input_dim()) +
                            " columns, basis expects " + std::to_string(set.dim));
  const Eigen::MatrixXd psi = design_matrix(basis, set, data.inputs);

  SurrogatePosterior post;
  post.basis = basis;
  post.index_set = set;
  post.x_dim = data.x_dim;
  post.prior = prior;
  auto& prov = post.provenance;
  prov.seed = mcmc.seed;
  prov.mcmc = mcmc;
  prov.data_digest = data.digest();
  prov.n_train = data.size();
  if (psi.rows() >= psi.cols() && psi.rows() > 0) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(psi);
    const auto& sv = svd.singularValues();
    prov.design_condition = sv(sv.size() - 1) > 0.0
                                ? sv(0) / sv(sv.size() - 1)
                                : std::numeric_limits<double>::infinity();
    if (prov.design_condition > 1e8)
      prov.warnings.push_back("design matrix condition number " +
                              std::to_string(prov.design_condition) + " exceeds 1e8");
  }

  const TargetDensity target = surrogate_target(psi, data.y, prior);
  const ChainOutput out = hmc_sample(target, mcmc);
  prov.rhat = out.rhat;
  prov.ess = out.ess;
  prov.accept_rate = out.accept_rate;
  prov.warnings.insert(prov.warnings.end(), out.warnings.begin(), out.warnings.end());

  const Eigen::MatrixXd pooled = out.pooled();
  const auto k = static_cast<Eigen::Index>(set.size());
  post.draws.resize(pooled.rows(), k + 1);
  post.draws.leftCols(k) = pooled.leftCols(k);
  if (prior.fixed_sigma) {
    post.draws.col(k).setConstant(*prior.fixed_sigma);
  } else {
    post.draws.col(k) = pooled.col(k).array().exp();
  }

  std::string offending;
  for (Eigen::Index i = 0; i < out.rhat.size(); ++i) {
    if (!(out.rhat(i) < options.rhat_threshold) && !std::isnan(out.rhat(i))) {
      offending += (offending.empty() ? "" : ", ") + target.names[static_cast<std::size_t>(i)] +
                   " (R-hat " + std::to_string(out.rhat(i)) + ")";
    }
  }
  if (!offending.empty()) {
    if (!options.allow_unconverged)
      throw ConvergenceFailure("fit_surrogate: R-hat above threshold for " + offending);
    prov.warnings.push_back("unconverged coordinates: " + offending);
  }
  return post;
}

double median(std::vector<double> v) {
  if (v.empty()) throw EmptyPosterior("median of an empty sample");
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

PceModel point_surrogate(const SurrogatePosterior& posterior) {
  if (posterior.n_draws() == 0)
    throw EmptyPosterior("point_surrogate: posterior holds no draws");
  const Eigen::Index k = posterior.n_coefficients();
  Eigen::VectorXd c(k);
  for (Eigen::Index d = 0; d < k; ++d) {
    const auto col = posterior.draws.col(d);
    c(d) = median(std::vector<double>(col.data(), col.data() + col.size()));
  }
  return PceModel(posterior.basis, posterior.index_set, c);
}

double median_sigma(const SurrogatePosterior& posterior) {
  if (posterior.n_draws() == 0)
    throw EmptyPosterior("median_sigma: posterior holds no draws");
  const auto col = posterior.draws.col(posterior.draws.cols() - 1);
  return median(std::vector<double>(col.data(), col.data() + col.size()));
}

double sample_error_adjusted(const PceModel& draw_model, double sigma,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& omega,
                             RngStream& rng) {
  return pce_predict(draw_model, concat_point(x, omega)) + sigma * rng.normal();
}

double sample_error_adjusted(const SurrogatePosterior& posterior, Eigen::Index draw,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& omega,
                             RngStream& rng) {
  const Eigen::VectorXd psi =
      basis_eval(posterior.basis, posterior.index_set, concat_point(x, omega));
  return posterior.coefficients(draw).dot(psi) + posterior.sigma(draw) * rng.normal();
}

}  // namespace uasabi
