#include "uasabi/error.hpp"
#include "uasabi/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace uasabi {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require(bool ok, const char* what) {
  if (!ok) throw InvalidParameter(what);
}

double beta_logpdf(double a, double b, double u) {
  if (u <= 0.0 || u >= 1.0) {
    // Boundary density is finite only for shape parameter exactly 1.
    if (u == 0.0 && a == 1.0) return std::lgamma(a + b) - std::lgamma(b);
    if (u == 1.0 && b == 1.0) return std::lgamma(a + b) - std::lgamma(a);
    return kNegInf;
  }
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(u) + (b - 1.0) * std::log1p(-u);
}

double beta_raw_moment(double a, double b, int j) {
  double m = 1.0;
  for (int r = 0; r < j; ++r) m *= (a + r) / (a + b + r);
  return m;
}

double beta_central_moment(double a, double b, int k) {
  const double mu = a / (a + b);
  double sum = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= k; ++j) {
    sum += binom * beta_raw_moment(a, b, j) * std::pow(-mu, k - j);
    binom = binom * (k - j) / (j + 1);
  }
  return sum;
}

}  // namespace

DistributionSpec DistributionSpec::normal(double mu, double sigma) {
  require(std::isfinite(mu) && sigma > 0 && std::isfinite(sigma),
          "Normal: requires finite mu and sigma > 0");
  return {DistKind::Normal, {mu, sigma}};
}

DistributionSpec DistributionSpec::half_normal(double sigma) {
  require(sigma > 0 && std::isfinite(sigma), "HalfNormal: requires sigma > 0");
  return {DistKind::HalfNormal, {sigma}};
}

DistributionSpec DistributionSpec::uniform(double a, double b) {
  require(std::isfinite(a) && std::isfinite(b) && b > a,
          "Uniform: requires finite a < b");
  return {DistKind::Uniform, {a, b}};
}

DistributionSpec DistributionSpec::beta(double alpha, double beta) {
  require(alpha > 0 && beta > 0 && std::isfinite(alpha) && std::isfinite(beta),
          "Beta: requires alpha > 0 and beta > 0");
  return {DistKind::Beta, {alpha, beta}};
}

DistributionSpec DistributionSpec::scaled_beta(double alpha, double beta,
                                               double loc, double scale) {
  require(alpha > 0 && beta > 0 && std::isfinite(alpha) && std::isfinite(beta),
          "ScaledBeta: requires alpha > 0 and beta > 0");
  require(std::isfinite(loc) && scale > 0 && std::isfinite(scale),
          "ScaledBeta: requires finite loc and scale > 0");
  return {DistKind::ScaledBeta, {alpha, beta, loc, scale}};
}

double DistributionSpec::logpdf(double v) const {
  if (std::isnan(v)) return kNegInf;
  switch (kind_) {
    case DistKind::Normal: {
      const double z = (v - p_[0]) / p_[1];
      return -0.5 * z * z - std::log(p_[1]) - kLogSqrt2Pi;
    }
    case DistKind::HalfNormal: {
      if (v < 0.0) return kNegInf;
      const double z = v / p_[0];
      return std::numbers::ln2 / 2 - 0.5 * z * z - std::log(p_[0]) - kLogSqrt2Pi;
    }
    case DistKind::Uniform:
      if (v < p_[0] || v >= p_[1]) return kNegInf;
      return -std::log(p_[1] - p_[0]);
    case DistKind::Beta:
      return beta_logpdf(p_[0], p_[1], v);
    case DistKind::ScaledBeta:
      return beta_logpdf(p_[0], p_[1], (v - p_[2]) / p_[3]) - std::log(p_[3]);
  }
  return kNegInf;
}

double DistributionSpec::dlogpdf(double v) const {
  switch (kind_) {
    case DistKind::Normal:
      return -(v - p_[0]) / (p_[1] * p_[1]);
    case DistKind::HalfNormal:
      return v < 0.0 ? 0.0 : -v / (p_[0] * p_[0]);
    case DistKind::Uniform:
      return 0.0;
    case DistKind::Beta:
    case DistKind::ScaledBeta: {
      const double loc = kind_ == DistKind::Beta ? 0.0 : p_[2];
      const double scale = kind_ == DistKind::Beta ? 1.0 : p_[3];
      const double u = (v - loc) / scale;
      if (u <= 0.0 || u >= 1.0) return 0.0;
      return ((p_[0] - 1.0) / u - (p_[1] - 1.0) / (1.0 - u)) / scale;
    }
  }
  return 0.0;
}

double DistributionSpec::sample(RngStream& rng) const {
  switch (kind_) {
    case DistKind::Normal:
      return p_[0] + p_[1] * rng.normal();
    case DistKind::HalfNormal:
      return std::abs(p_[0] * rng.normal());
    case DistKind::Uniform:
      return p_[0] + (p_[1] - p_[0]) * rng.uniform();
    case DistKind::Beta:
    case DistKind::ScaledBeta: {
      const double g1 = rng.gamma(p_[0]);
      const double g2 = rng.gamma(p_[1]);
      const double u = g1 / (g1 + g2);
      return kind_ == DistKind::Beta ? u : p_[2] + p_[3] * u;
    }
  }
  return 0.0;
}

double DistributionSpec::mean() const {
  switch (kind_) {
    case DistKind::Normal:
      return p_[0];
    case DistKind::HalfNormal:
      return p_[0] * std::sqrt(2.0 / std::numbers::pi);
    case DistKind::Uniform:
      return 0.5 * (p_[0] + p_[1]);
    case DistKind::Beta:
      return p_[0] / (p_[0] + p_[1]);
    case DistKind::ScaledBeta:
      return p_[2] + p_[3] * p_[0] / (p_[0] + p_[1]);
  }
  return 0.0;
}

double DistributionSpec::variance() const {
  switch (kind_) {
    case DistKind::Normal:
      return p_[1] * p_[1];
    case DistKind::HalfNormal:
      return p_[0] * p_[0] * (1.0 - 2.0 / std::numbers::pi);
    case DistKind::Uniform:
      return (p_[1] - p_[0]) * (p_[1] - p_[0]) / 12.0;
    case DistKind::Beta:
    case DistKind::ScaledBeta: {
      const double a = p_[0], b = p_[1];
      const double v = a * b / ((a + b) * (a + b) * (a + b + 1.0));
      return kind_ == DistKind::Beta ? v : v * p_[3] * p_[3];
    }
  }
  return 0.0;
}

double DistributionSpec::sd() const { return std::sqrt(variance()); }

std::pair<double, double> DistributionSpec::support() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (kind_) {
    case DistKind::Normal:
      return {-inf, inf};
    case DistKind::HalfNormal:
      return {0.0, inf};
    case DistKind::Uniform:
      return {p_[0], p_[1]};
    case DistKind::Beta:
      return {0.0, 1.0};
    case DistKind::ScaledBeta:
      return {p_[2], p_[2] + p_[3]};
  }
  return {-inf, inf};
}

std::optional<double> DistributionSpec::central_moment(int k) const {
  if (k < 0) return std::nullopt;
  if (k == 0) return 1.0;
  switch (kind_) {
    case DistKind::Normal: {
      if (k % 2) return 0.0;
      double df = 1.0;
      for (int i = k - 1; i > 1; i -= 2) df *= i;
      return df * std::pow(p_[1], k);
    }
    case DistKind::Uniform: {
      if (k % 2) return 0.0;
      const double h = 0.5 * (p_[1] - p_[0]);
      return std::pow(h, k) / (k + 1);
    }
    case DistKind::Beta:
      return beta_central_moment(p_[0], p_[1], k);
    case DistKind::ScaledBeta:
      return std::pow(p_[3], k) * beta_central_moment(p_[0], p_[1], k);
    case DistKind::HalfNormal:
      return std::nullopt;
  }
  return std::nullopt;
}

std::string DistributionSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case DistKind::Normal:
      os << "Normal(" << p_[0] << ", " << p_[1] << ")";
      break;
    case DistKind::HalfNormal:
      os << "HalfNormal(" << p_[0] << ")";
      break;
    case DistKind::Uniform:
      os << "Uniform(" << p_[0] << ", " << p_[1] << ")";
      break;
    case DistKind::Beta:
      os << "Beta(" << p_[0] << ", " << p_[1] << ")";
      break;
    case DistKind::ScaledBeta:
      os << "ScaledBeta(" << p_[0] << ", " << p_[1] << ", " << p_[2] << ", "
         << p_[3] << ")";
      break;
  }
  return os.str();
}

double dist_logpdf(const DistributionSpec& spec, double v) {
  return spec.logpdf(v);
}

double dist_sample(const DistributionSpec& spec, RngStream& rng) {
  return spec.sample(rng);
}

}  // namespace uasabi
