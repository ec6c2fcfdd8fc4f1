#include "uasabi/error.hpp"
#include "uasabi/numerics.hpp"

#include <array>
#include <bit>

namespace uasabi {
namespace {

struct DirectionEntry {
  unsigned degree;
  unsigned poly;
  std::array<unsigned, 5> m;
};

// new-joe-kuo-6.21201, dimensions 2..8. Dimension 1 is the van der Corput
// sequence.
constexpr std::array<DirectionEntry, kMaxSobolDim - 1> kJoeKuo{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
}};

constexpr unsigned kBits = 32;

std::array<std::uint32_t, kBits> directions(int dim) {
  std::array<std::uint32_t, kBits> v{};
  if (dim == 0) {
    for (unsigned i = 0; i < kBits; ++i) v[i] = 1u << (kBits - 1 - i);
    return v;
  }
  const auto& e = kJoeKuo[dim - 1];
  const unsigned s = e.degree;
  for (unsigned i = 0; i < s && i < kBits; ++i) v[i] = e.m[i] << (kBits - 1 - i);
  for (unsigned i = s; i < kBits; ++i) {
    v[i] = v[i - s] ^ (v[i - s] >> s);
    for (unsigned k = 1; k < s; ++k) {
      if ((e.poly >> (s - 1 - k)) & 1u) v[i] ^= v[i - k];
    }
  }
  return v;
}

}  // namespace

Eigen::MatrixXd sobol_points(int dim, std::size_t n, bool skip_origin) {
  if (dim < 1 || dim > kMaxSobolDim) {
    throw UnsupportedDimension("sobol_points: dimension " + std::to_string(dim) +
                               " outside supported range 1.." +
                               std::to_string(kMaxSobolDim));
  }
  const std::size_t skip = skip_origin ? 1 : 0;
  if (n + skip > (std::size_t{1} << kBits)) {
    throw UnsupportedDimension("sobol_points: too many points requested");
  }
  std::vector<std::array<std::uint32_t, kBits>> dirs;
  for (int d = 0; d < dim; ++d) dirs.push_back(directions(d));

  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim);
  std::vector<std::uint32_t> x(dim, 0);
  const std::size_t last = n + skip;
  for (std::size_t i = 0; i < last; ++i) {
    if (i >= skip) {
      for (int d = 0; d < dim; ++d)
        out(static_cast<Eigen::Index>(i - skip), d) =
            static_cast<double>(x[d]) * 0x1.0p-32;
    }
    if (i + 1 == last) break;
    // Gray-code step: flip the direction at the lowest zero bit of i.
    const unsigned c = static_cast<unsigned>(std::countr_one(i));
    for (int d = 0; d < dim; ++d) x[d] ^= dirs[d][c];
  }
  return out;
}

}  // namespace uasabi
