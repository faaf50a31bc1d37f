#pragma once

// Minimum-cost perfect matching on a dense square cost matrix.

#include "relaxflow/types.hpp"

#include <vector>

namespace relaxflow {

struct Assignment {
  std::vector<std::size_t> row_to_col;  // column matched to each row
  double cost = 0.0;                    // sum of matched entries
};

/// Hungarian method with shortest augmenting paths, O(n^3). Deterministic.
/// Throws std::invalid_argument for non-square or non-finite costs.
Assignment solve_assignment(const Matrix& cost);

}  // namespace relaxflow
