#include "uasabi/polychaos.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <map>

namespace uasabi {

namespace {

void enumerate_degree(int dim, int remaining, MultiIndex& cur, int pos,
                      std::vector<MultiIndex>& out) {
  if (pos == dim - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int k = remaining; k >= 0; --k) {
    cur[pos] = k;
    enumerate_degree(dim, remaining - k, cur, pos + 1, out);
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

MultiIndexSet truncation_indices(int dim, int degree) {
  if (dim < 1) throw InvalidParameter("truncation_indices: dim must be >= 1");
  if (degree < 0) throw InvalidParameter("truncation_indices: degree must be >= 0");
  MultiIndexSet s{dim, degree, {}};
  MultiIndex cur(dim, 0);
  for (int total = 0; total <= degree; ++total) {
    enumerate_degree(dim, total, cur, 0, s.indices);
  }
  return s;
}

std::size_t truncation_cardinality(int dim, int degree) {
  return static_cast<std::size_t>(std::llround(binomial(dim + degree, degree)));
}

BasisSpec legendre_basis(std::span<const std::pair<double, double>> bounds) {
  BasisSpec b;
  for (const auto& [lo, hi] : bounds) {
    if (!(hi > lo)) throw InvalidParameter("legendre_basis: hi must exceed lo");
    b.dims.emplace_back(LegendreOnBox{lo, hi});
  }
  return b;
}

ApcBasis1d apc_basis_1d(const DistributionSpec& weight, int max_degree,
                        std::uint64_t mc_seed) {
  if (max_degree < 0) throw InvalidParameter("apc_basis_1d: negative degree");
  ApcBasis1d out;
  out.shift = weight.mean();
  out.scale = weight.sd();
  out.weight = weight;
  const int n_mom = 2 * max_degree + 1;

  // Standardized moments E[u^k], u = (v - mean) / sd.
  std::vector<double> mom(n_mom, 0.0);
  bool analytic = true;
  for (int k = 0; k < n_mom; ++k) {
    const auto cm = weight.central_moment(k);
    if (!cm) {
      analytic = false;
      break;
    }
    mom[k] = *cm / std::pow(out.scale, k);
  }
  if (!analytic) {
    constexpr int kSamples = 1'000'000;
    RngStream rng(mc_seed, 0);
    std::fill(mom.begin(), mom.end(), 0.0);
    for (int s = 0; s < kSamples; ++s) {
      const double u = (weight.sample(rng) - out.shift) / out.scale;
      double p = 1.0;
      for (int k = 0; k < n_mom; ++k) {
        mom[k] += p;
        p *= u;
      }
    }
    for (auto& m : mom) m /= kSamples;
  }

  const int n = max_degree + 1;
  Eigen::MatrixXd hankel(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) hankel(i, j) = mom[i + j];

  // Explicit Cholesky so the collapsing degree can be reported.
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    double pivot = hankel(k, k) - chol.row(k).head(k).squaredNorm();
    if (!(pivot > 1e-12 * hankel(k, k)) || !std::isfinite(pivot)) {
      throw IllConditionedBasis(
          k, "apc_basis_1d: moment matrix numerically singular at degree " +
                 std::to_string(k) + " for " + weight.describe());
    }
    chol(k, k) = std::sqrt(pivot);
    for (int i = k + 1; i < n; ++i) {
      chol(i, k) =
          (hankel(i, k) - chol.row(i).head(k).dot(chol.row(k).head(k))) /
          chol(k, k);
    }
  }
  out.coefficients = chol.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  return out;
}

Eigen::MatrixXd ApcBasis1d::monomial_coefficients() const {
  const int n = static_cast<int>(coefficients.rows());
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k <= i; ++k) {
      const double ck = coefficients(i, k) / std::pow(scale, k);
      for (int j = 0; j <= k; ++j) {
        raw(i, j) += ck * binomial(k, j) * std::pow(-shift, k - j);
      }
    }
  }
  return raw;
}

void eval_basis_1d(const Basis1d& b, int max_degree, double v, double* values,
                   double* derivs) {
  if (const auto* leg = std::get_if<LegendreOnBox>(&b)) {
    const double w = leg->hi - leg->lo;
    const double t = (2.0 * v - leg->lo - leg->hi) / w;
    legendre_orthonormal_table<double>(max_degree, t, values, derivs);
    if (derivs)
      for (int n = 0; n <= max_degree; ++n) derivs[n] *= 2.0 / w;
    return;
  }
  const auto& apc = std::get<ApcBasis1d>(b);
  if (apc.max_degree() < max_degree)
    throw DimensionMismatch("eval_basis_1d: aPC family degree too low");
  const double u = (v - apc.shift) / apc.scale;
  for (int n = 0; n <= max_degree; ++n) {
    double acc = 0.0, dacc = 0.0;
    for (int k = n; k >= 0; --k) {
      dacc = dacc * u + acc;
      acc = acc * u + apc.coefficients(n, k);
    }
    values[n] = acc;
    if (derivs) derivs[n] = dacc / apc.scale;
  }
}

Eigen::MatrixXd design_matrix(const BasisSpec& basis, const MultiIndexSet& set,
                              const Eigen::MatrixXd& points) {
  Eigen::MatrixXd psi(points.rows(), static_cast<Eigen::Index>(set.size()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    psi.row(i) = basis_eval(basis, set, points.row(i).transpose()).transpose();
  }
  return psi;
}

PceModel::PceModel(BasisSpec b, MultiIndexSet s, Eigen::VectorXd c)
    : basis(std::move(b)), index_set(std::move(s)), coefficients(std::move(c)) {
  if (static_cast<std::size_t>(coefficients.size()) != index_set.size()) {
    throw DimensionMismatch("PceModel: " + std::to_string(coefficients.size()) +
                            " coefficients for " +
                            std::to_string(index_set.size()) + " basis terms");
  }
  if (basis.dim() != index_set.dim)
    throw DimensionMismatch("PceModel: basis and index set dimensions differ");
}

ReducedPce::ReducedPce(const BasisSpec& basis, const MultiIndexSet& set,
                       const Eigen::MatrixXd& fixed_values) {
  const int n_fixed = static_cast<int>(fixed_values.cols());
  if (basis.dim() != set.dim || n_fixed > set.dim)
    throw DimensionMismatch("ReducedPce: inconsistent dimensions");
  free_dim_ = set.dim - n_fixed;
  max_degree_ = set.max_total_degree;
  free_basis_.dims.assign(basis.dims.begin() + n_fixed, basis.dims.end());

  std::map<MultiIndex, int> lookup;
  for (const auto& idx : set.indices) {
    MultiIndex tail(idx.begin() + n_fixed, idx.end());
    auto [it, inserted] =
        lookup.emplace(tail, static_cast<int>(free_indices_.size()));
    if (inserted) free_indices_.push_back(tail);
    term_to_free_.push_back(it->second);
  }

  const int p = max_degree_;
  fixed_factor_.resize(fixed_values.rows(), static_cast<Eigen::Index>(set.size()));
  std::vector<double> table((p + 1) * std::max(n_fixed, 1));
  for (Eigen::Index j = 0; j < fixed_values.rows(); ++j) {
    for (int k = 0; k < n_fixed; ++k)
      eval_basis_1d(basis.dims[k], p, fixed_values(j, k), &table[k * (p + 1)]);
    for (std::size_t t = 0; t < set.size(); ++t) {
      double v = 1.0;
      for (int k = 0; k < n_fixed; ++k) v *= table[k * (p + 1) + set.indices[t][k]];
      fixed_factor_(j, static_cast<Eigen::Index>(t)) = v;
    }
  }
  weights_ = Eigen::MatrixXd::Zero(fixed_values.rows(),
                                   static_cast<Eigen::Index>(free_indices_.size()));
}

void ReducedPce::set_coefficients(const Eigen::VectorXd& c) {
  if (c.size() != fixed_factor_.cols())
    throw DimensionMismatch("ReducedPce: coefficient length mismatch");
  weights_.setZero();
  for (Eigen::Index t = 0; t < c.size(); ++t) {
    weights_.col(term_to_free_[t]) += c(t) * fixed_factor_.col(t);
  }
}

void ReducedPce::evaluate(const Eigen::VectorXd& free, Eigen::VectorXd& predictions,
                          Eigen::MatrixXd* jacobian) const {
  if (free.size() != free_dim_)
    throw DimensionMismatch("ReducedPce: free coordinate count mismatch");
  const int p = max_degree_;
  const int q = free_dim_;
  Eigen::MatrixXd val(p + 1, q), der(p + 1, q);
  for (int k = 0; k < q; ++k)
    eval_basis_1d(free_basis_.dims[k], p, free(k), val.col(k).data(),
                  der.col(k).data());
  const auto n_free = static_cast<Eigen::Index>(free_indices_.size());
  Eigen::VectorXd phi(n_free);
  Eigen::MatrixXd dphi(n_free, q);
  for (Eigen::Index u = 0; u < n_free; ++u) {
    const auto& idx = free_indices_[u];
    double v = 1.0;
    for (int k = 0; k < q; ++k) v *= val(idx[k], k);
    phi(u) = v;
    if (jacobian) {
      for (int k = 0; k < q; ++k) {
        double g = der(idx[k], k);
        for (int m = 0; m < q; ++m)
          if (m != k) g *= val(idx[m], m);
        dphi(u, k) = g;
      }
    }
  }
  predictions = weights_ * phi;
  if (jacobian) *jacobian = weights_ * dphi;
}

}  // namespace uasabi
