// Seeded sampling helpers shared by the tracker initializer and the
// synthetic generator. All draws go through std::mt19937_64 so a fixed seed
// reproduces a run exactly.

#pragma once

#include <random>

#include "subtrack/core.hpp"

namespace subtrack::detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = normal(rng);
    }
  }
  return m;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

// k distinct indices from [0, n), sorted increasing (partial Fisher-Yates).
inline std::vector<Index> sample_indices(std::mt19937_64& rng, Index n, Index k) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace subtrack::detail
