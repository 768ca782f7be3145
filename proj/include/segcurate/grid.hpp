#pragma once

#include <cstdint>
#include <vector>

namespace segcurate {

// d x d binary grid derived from a ground-truth mask at attention resolution.
struct GroundTruthGrid {
  int d = 0;
  std::vector<std::uint8_t> cells;  // row-major, each 0 or 1

  std::uint8_t at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * static_cast<std::size_t>(d) +
                 static_cast<std::size_t>(col)];
  }

  friend bool operator==(const GroundTruthGrid&, const GroundTruthGrid&) = default;
};

}  // namespace segcurate
