#pragma once

#include "uasabi/neural.hpp"

#include <vector>

namespace uasabi::detail {

/// Element inputs [x; y] as columns, with set b spanning columns
/// offsets[b]..offsets[b+1].
void assemble_elements(const std::vector<ObservationSet>& sets, int width,
                       Eigen::MatrixXd& elements, std::vector<Eigen::Index>& offsets);

/// Per-set mean of the columns of h, summed in lexicographic order of the
/// element inputs.
Eigen::MatrixXd pool_mean(const Eigen::MatrixXd& h, const Eigen::MatrixXd& elements,
                          const std::vector<Eigen::Index>& offsets);

}  // namespace uasabi::detail
