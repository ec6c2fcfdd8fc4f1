#pragma once

#include "uasabi/error.hpp"
#include "uasabi/numerics.hpp"

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace uasabi {

using MultiIndex = std::vector<int>;

/// Total-degree truncated multi-index set, graded: total degree ascending,
/// then lexicographically descending within a degree, so that for two
/// dimensions the order is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
struct MultiIndexSet {
  int dim = 0;
  int max_total_degree = 0;
  std::vector<MultiIndex> indices;

  std::size_t size() const { return indices.size(); }
  const MultiIndex& operator[](std::size_t i) const { return indices[i]; }
  bool operator==(const MultiIndexSet&) const = default;
};

MultiIndexSet truncation_indices(int dim, int degree);

/// binomial(dim + degree, degree)
std::size_t truncation_cardinality(int dim, int degree);

/// sqrt(2n+1) P_n(t): orthonormal under the Uniform(-1, 1) probability
/// measure. |t| > 1 extrapolates the polynomial.
template <typename Scalar>
Scalar legendre_orthonormal(int degree, Scalar t) {
  if (degree <= 0) return Scalar(1);
  Scalar p0(1), p1 = t;
  for (int k = 1; k < degree; ++k) {
    Scalar p2 = (Scalar(2 * k + 1) * t * p1 - Scalar(k) * p0) / Scalar(k + 1);
    p0 = p1;
    p1 = p2;
  }
  using std::sqrt;
  return sqrt(Scalar(2 * degree + 1)) * p1;
}

/// Orthonormal Legendre values and t-derivatives for degrees 0..max_degree.
template <typename Scalar>
void legendre_orthonormal_table(int max_degree, Scalar t, Scalar* values,
                                Scalar* derivs) {
  Scalar pm1(0), p(1), dm1(0), d(0);
  for (int n = 0; n <= max_degree; ++n) {
    using std::sqrt;
    const Scalar norm = sqrt(Scalar(2 * n + 1));
    values[n] = norm * p;
    if (derivs) derivs[n] = norm * d;
    // P_{n+1} = ((2n+1) t P_n - n P_{n-1}) / (n+1)
    const Scalar pn = (Scalar(2 * n + 1) * t * p - Scalar(n) * pm1) / Scalar(n + 1);
    // P'_{n+1} = P'_{n-1} + (2n+1) P_n
    const Scalar dn = dm1 + Scalar(2 * n + 1) * p;
    pm1 = p;
    p = pn;
    dm1 = d;
    d = dn;
  }
}

/// Legendre family on [lo, hi]; inputs are mapped affinely onto [-1, 1].
struct LegendreOnBox {
  double lo = -1.0;
  double hi = 1.0;
  bool operator==(const LegendreOnBox&) const = default;
};

/// Moment-based orthonormal family. Polynomials are stored in the
/// standardized variable u = (v - shift) / scale; row i of `coefficients`
/// holds the monomial coefficients of p_i(u), lower triangular.
struct ApcBasis1d {
  double shift = 0.0;
  double scale = 1.0;
  Eigen::MatrixXd coefficients;
  /// Weight the family was built from, kept for persistence.
  std::optional<DistributionSpec> weight;

  int max_degree() const { return static_cast<int>(coefficients.rows()) - 1; }

  /// Monomial coefficients with respect to the raw variable v.
  Eigen::MatrixXd monomial_coefficients() const;

  bool operator==(const ApcBasis1d& o) const {
    return shift == o.shift && scale == o.scale &&
           coefficients == o.coefficients && weight == o.weight;
  }
};

using Basis1d = std::variant<LegendreOnBox, ApcBasis1d>;

/// Per-dimension univariate families of a multivariate product basis.
struct BasisSpec {
  std::vector<Basis1d> dims;
  int dim() const { return static_cast<int>(dims.size()); }
  bool operator==(const BasisSpec&) const = default;
};

BasisSpec legendre_basis(std::span<const std::pair<double, double>> bounds);

/// Orthonormal family for `weight` up to `max_degree` from the Hankel moment
/// matrix via Cholesky. Throws IllConditionedBasis naming the first degree
/// whose pivot collapses.
ApcBasis1d apc_basis_1d(const DistributionSpec& weight, int max_degree,
                        std::uint64_t mc_seed = 0x5eed);

/// Values (and optional raw-variable derivatives) of degrees 0..max_degree.
void eval_basis_1d(const Basis1d& b, int max_degree, double v, double* values,
                   double* derivs = nullptr);

/// Psi(point): product over dimensions of the univariate polynomials at the
/// per-dimension degree of each multi-index.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> basis_eval(
    const BasisSpec& basis, const MultiIndexSet& set,
    const Eigen::MatrixBase<Derived>& point) {
  using Scalar = typename Derived::Scalar;
  const int d = set.dim;
  if (point.size() != d || basis.dim() != d) {
    throw DimensionMismatch("basis_eval: point has " +
                            std::to_string(point.size()) +
                            " coordinates, index set expects " +
                            std::to_string(d));
  }
  const int p = set.max_total_degree;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> table(p + 1, d);
  for (int j = 0; j < d; ++j) {
    if (const auto* leg = std::get_if<LegendreOnBox>(&basis.dims[j])) {
      const Scalar t = (Scalar(2) * point(j) - Scalar(leg->lo + leg->hi)) /
                       Scalar(leg->hi - leg->lo);
      legendre_orthonormal_table<Scalar>(p, t, table.col(j).data(), nullptr);
    } else {
      const auto& apc = std::get<ApcBasis1d>(basis.dims[j]);
      if (apc.max_degree() < p)
        throw DimensionMismatch("basis_eval: aPC family degree too low");
      const Scalar u = (point(j) - Scalar(apc.shift)) / Scalar(apc.scale);
      for (int n = 0; n <= p; ++n) {
        Scalar acc(0);
        for (int k = n; k >= 0; --k) acc = acc * u + Scalar(apc.coefficients(n, k));
        table(n, j) = acc;
      }
    }
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> psi(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    Scalar v(1);
    for (int j = 0; j < d; ++j) v *= table(set.indices[i][j], j);
    psi(static_cast<Eigen::Index>(i)) = v;
  }
  return psi;
}

/// Rows of `points` evaluated through basis_eval.
Eigen::MatrixXd design_matrix(const BasisSpec& basis, const MultiIndexSet& set,
                              const Eigen::MatrixXd& points);

/// Deterministic PCE: sum_d c_d Psi_d.
struct PceModel {
  BasisSpec basis;
  MultiIndexSet index_set;
  Eigen::VectorXd coefficients;

  PceModel() = default;
  PceModel(BasisSpec b, MultiIndexSet s, Eigen::VectorXd c);
};

template <typename Derived>
typename Derived::Scalar pce_predict(const PceModel& model,
                                     const Eigen::MatrixBase<Derived>& point) {
  using Scalar = typename Derived::Scalar;
  return model.coefficients.cast<Scalar>().dot(
      basis_eval(model.basis, model.index_set, point));
}

/// PCE with the leading `fixed` coordinates pinned per observation, reduced to
/// a polynomial in the remaining coordinates. Row j of the result evaluates
/// prediction j; used for parameter inference where inputs x are observed.
class ReducedPce {
 public:
  ReducedPce(const BasisSpec& basis, const MultiIndexSet& set,
             const Eigen::MatrixXd& fixed_values);

  /// Collapse coefficients c into per-observation weights on the free basis.
  void set_coefficients(const Eigen::VectorXd& c);

  int free_dim() const { return free_dim_; }
  Eigen::Index n_obs() const { return fixed_factor_.rows(); }

  /// predictions(j) and jacobian(j, k) = d prediction_j / d free_k.
  void evaluate(const Eigen::VectorXd& free, Eigen::VectorXd& predictions,
                Eigen::MatrixXd* jacobian) const;

 private:
  BasisSpec free_basis_;
  int free_dim_;
  int max_degree_;
  std::vector<MultiIndex> free_indices_;
  std::vector<int> term_to_free_;
  Eigen::MatrixXd fixed_factor_;  // [obs][term]
  Eigen::MatrixXd weights_;       // [obs][free term]
};

}  // namespace uasabi
