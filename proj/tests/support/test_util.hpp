#pragma once

#include <cmath>
#include <random>

#include "diffetm/tensor.hpp"

namespace diffetm::testing {

inline grad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  grad::Tensor t(rows, cols);
  for (double& v : t.data()) v = d(rng);
  return t;
}

/// Random values kept at least `gap` away from zero (for kinked ops).
inline grad::Tensor random_away_from_zero(std::size_t rows, std::size_t cols,
                                          std::mt19937_64& rng, double gap = 0.05) {
  grad::Tensor t = random_tensor(rows, cols, rng);
  for (double& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

inline double max_abs_diff(const grad::Tensor& a, const grad::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace diffetm::testing
