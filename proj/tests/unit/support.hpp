#pragma once

#include "relaxflow/types.hpp"

#include <initializer_list>
#include <random>

namespace testing {

inline relaxflow::Vector vec(std::initializer_list<double> values) {
  relaxflow::Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

inline relaxflow::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                       double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  relaxflow::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace testing
