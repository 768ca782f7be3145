#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace segcurate {

// Dense row-major tensor as exchanged on the command line:
// {"shape": [...], "data": [...]}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t element_count() const noexcept;
};

void to_json(nlohmann::json& j, const Tensor& t);
// Throws ShapeMismatch when data length differs from the shape's product.
void from_json(const nlohmann::json& j, Tensor& t);

}  // namespace segcurate
