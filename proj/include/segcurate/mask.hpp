#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "segcurate/grid.hpp"

namespace segcurate {

// H x W binary raster, row-major. Every other module's geometry goes through
// this type.
class BinaryMask {
 public:
  BinaryMask() = default;
  // All-zero mask.
  BinaryMask(int height, int width);
  // Throws InvalidMask unless data.size() == height*width and every value is 0 or 1.
  BinaryMask(int height, int width, std::vector<std::uint8_t> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t at(int row, int col) const { return data_[index(row, col)]; }
  void set(int row, int col, bool on = true) { data_[index(row, col)] = on ? 1 : 0; }

  std::span<const std::uint8_t> pixels() const noexcept { return data_; }
  std::size_t area() const noexcept;
  bool any() const noexcept { return area() != 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

// Row-major run lengths alternating background/foreground, starting with a
// background run that may be zero.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> runs;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

// Inclusive pixel indices, x = column, y = row.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const noexcept { return x_max - x_min + 1; }
  int height() const noexcept { return y_max - y_min + 1; }
  long long area() const noexcept { return static_cast<long long>(width()) * height(); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ComponentLabeling {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // 0 = background, 1..count
  int count = 0;
  std::vector<std::size_t> sizes;  // sizes[i] is the pixel count of label i+1
};

enum class Connectivity { Four = 4, Eight = 8 };

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle);

// Labels are assigned in first-encounter order of a row-major scan.
ComponentLabeling connected_components(const BinaryMask& mask,
                                       Connectivity connectivity = Connectivity::Eight);

// Pixels of one component as a mask of the same size.
BinaryMask extract_component(const ComponentLabeling& labeling, int label);

BBox mask_to_bbox(const BinaryMask& mask);

// Proportional partition of rows and columns into d bands; a cell is set when
// any pixel of its region is foreground.
GroundTruthGrid downsample_gt(const BinaryMask& mask, int d);

void to_json(nlohmann::json& j, const RleMask& rle);
void from_json(const nlohmann::json& j, RleMask& rle);
void to_json(nlohmann::json& j, const BBox& box);
void from_json(const nlohmann::json& j, BBox& box);

}  // namespace segcurate
