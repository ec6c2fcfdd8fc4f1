#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace uasabi {

/// Reproducible 64-bit random stream (xoshiro256** seeded from a SplitMix64
/// hash of the (seed, stream_id) pair). Child streams are derived purely from
/// the parent identifiers, never from the parent's consumed state.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Independent stream keyed by `index` under this stream's identity.
  RngStream child(std::uint64_t index) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next(); }
  std::uint64_t next();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  double gamma(double shape);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename Range>
  void shuffle(Range& r) {
    for (std::size_t i = r.size(); i > 1; --i) {
      std::swap(r[i - 1], r[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4];
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
/// 64-bit FNV-1a over raw bytes, continuing from `h`.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset);

enum class DistKind { Normal, HalfNormal, Uniform, Beta, ScaledBeta };

/// One-dimensional distribution used for priors and polynomial weights.
/// Parameters are validated at construction.
class DistributionSpec {
 public:
  static DistributionSpec normal(double mu, double sigma);
  static DistributionSpec half_normal(double sigma);
  static DistributionSpec uniform(double a, double b);
  static DistributionSpec beta(double alpha, double beta);
  /// loc + scale * Beta(alpha, beta)
  static DistributionSpec scaled_beta(double alpha, double beta, double loc,
                                      double scale);

  DistKind kind() const { return kind_; }
  /// Parameters in declaration order of the named constructor.
  const std::vector<double>& params() const { return p_; }

  double logpdf(double v) const;
  double sample(RngStream& rng) const;
  /// d/dv logpdf, zero outside the support.
  double dlogpdf(double v) const;

  double mean() const;
  double variance() const;
  double sd() const;
  std::pair<double, double> support() const;

  /// E[(V - mean)^k] in closed form, when one exists in this library.
  std::optional<double> central_moment(int k) const;

  std::string describe() const;
  bool operator==(const DistributionSpec&) const = default;

 private:
  DistributionSpec(DistKind k, std::vector<double> p)
      : kind_(k), p_(std::move(p)) {}
  DistKind kind_;
  std::vector<double> p_;
};

double dist_logpdf(const DistributionSpec& spec, double v);
double dist_sample(const DistributionSpec& spec, RngStream& rng);

/// Unscrambled Sobol points (Joe-Kuo direction numbers, Gray-code order),
/// rows are points. With `skip_origin`, index 0 is skipped.
Eigen::MatrixXd sobol_points(int dim, std::size_t n, bool skip_origin = true);

inline constexpr int kMaxSobolDim = 8;

/// Per-coordinate affine map of unit-cube points onto [lo_i, hi_i].
Eigen::MatrixXd scale_to_box(const Eigen::MatrixXd& points,
                             std::span<const std::pair<double, double>> bounds);

/// Standard-normal CDF and quantile.
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace uasabi
