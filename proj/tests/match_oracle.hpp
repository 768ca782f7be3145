#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "segcurate/query_match.hpp"

namespace segcurate::testing {

struct BruteForce {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> columns;  // column of each row, lexicographically smallest optimum
};

// Enumerates every injection of rows into columns in lexicographic order.
inline BruteForce brute_force_assignment(const CostMatrix& m) {
  BruteForce best;
  std::vector<std::size_t> cols(m.cols);
  std::iota(cols.begin(), cols.end(), 0u);
  std::vector<std::size_t> current(m.rows);
  std::vector<char> used(m.cols, 0);
  const auto recurse = [&](auto&& self, std::size_t row, double acc) -> void {
    if (row == m.rows) {
      if (acc < best.cost) {
        best.cost = acc;
        best.columns = current;
      }
      return;
    }
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      current[row] = j;
      self(self, row + 1, acc + m.at(row, j));
      used[j] = 0;
    }
  };
  recurse(recurse, 0, 0.0);
  return best;
}

inline CostMatrix random_cost_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                     bool integer_costs) {
  CostMatrix m;
  m.rows = rows;
  m.cols = cols;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    m.values.push_back(integer_costs ? static_cast<double>(small(rng)) : u(rng));
  }
  return m;
}

}  // namespace segcurate::testing
