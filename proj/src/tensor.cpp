#include "segcurate/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>

#include "segcurate/error.hpp"

namespace segcurate {

std::size_t Tensor::element_count() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

void to_json(nlohmann::json& j, const Tensor& t) {
  j = nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

void from_json(const nlohmann::json& j, Tensor& t) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw Error(ErrorCode::InvalidArgument, "tensor needs shape and data");
  }
  try {
    t.shape = j.at("shape").get<std::vector<std::size_t>>();
    t.data = j.at("data").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad tensor: ") + e.what());
  }
  if (t.data.size() != t.element_count()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(t.data.size()) +
                                              " does not match shape product " +
                                              std::to_string(t.element_count()));
  }
}

}  // namespace segcurate
