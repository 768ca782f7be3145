#include "segcurate/mask.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <string>

#include "segcurate/error.hpp"

namespace segcurate {
namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::InvalidMask, "mask dimensions must be >= 1, got " +
                                            std::to_string(height) + "x" + std::to_string(width));
  }
}

}  // namespace

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw Error(ErrorCode::InvalidMask, "data length " + std::to_string(data_.size()) +
                                            " does not match " + std::to_string(height) + "x" +
                                            std::to_string(width));
  }
  if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw Error(ErrorCode::InvalidMask, "mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::area() const noexcept {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const std::uint8_t v : mask.pixels()) {
    if (v != current) {
      rle.runs.push_back(run);
      current = v;
      run = 0;
    }
    ++run;
  }
  rle.runs.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
  check_dims(rle.height, rle.width);
  const auto total = static_cast<std::uint64_t>(rle.height) * static_cast<std::uint64_t>(rle.width);
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < rle.runs.size(); ++i) {
    if (i > 0 && rle.runs[i] == 0) {
      throw Error(ErrorCode::InteriorZeroRun, "run " + std::to_string(i) + " is zero");
    }
    sum += rle.runs[i];
  }
  if (sum != total) {
    throw Error(ErrorCode::RunSumMismatch,
                "runs sum to " + std::to_string(sum) + ", expected " + std::to_string(total));
  }
  std::vector<std::uint8_t> data;
  data.reserve(total);
  std::uint8_t value = 0;
  for (const std::uint32_t run : rle.runs) {
    data.insert(data.end(), run, value);
    value ^= 1;
  }
  return BinaryMask(rle.height, rle.width, std::move(data));
}

ComponentLabeling connected_components(const BinaryMask& mask, Connectivity connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  ComponentLabeling out{h, w, std::vector<int>(mask.size(), 0), 0, {}};

  static constexpr std::array<std::array<int, 2>, 8> kOffsets{{
      {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1},
  }};
  const std::size_t neighbours = connectivity == Connectivity::Eight ? 8 : 4;

  std::vector<std::size_t> stack;
  const auto pixels = mask.pixels();
  for (std::size_t start = 0; start < pixels.size(); ++start) {
    if (!pixels[start] || out.labels[start] != 0) continue;
    const int label = ++out.count;
    std::size_t size = 0;
    out.labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(idx / static_cast<std::size_t>(w));
      const int c = static_cast<int>(idx % static_cast<std::size_t>(w));
      for (std::size_t k = 0; k < neighbours; ++k) {
        const int nr = r + kOffsets[k][0];
        const int nc = c + kOffsets[k][1];
        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
        const std::size_t nidx =
            static_cast<std::size_t>(nr) * static_cast<std::size_t>(w) + static_cast<std::size_t>(nc);
        if (pixels[nidx] && out.labels[nidx] == 0) {
          out.labels[nidx] = label;
          stack.push_back(nidx);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

BinaryMask extract_component(const ComponentLabeling& labeling, int label) {
  if (label < 1 || label > labeling.count) {
    throw Error(ErrorCode::InvalidArgument, "no component with label " + std::to_string(label));
  }
  std::vector<std::uint8_t> data(labeling.labels.size());
  std::transform(labeling.labels.begin(), labeling.labels.end(), data.begin(),
                 [label](int l) { return static_cast<std::uint8_t>(l == label ? 1 : 0); });
  return BinaryMask(labeling.height, labeling.width, std::move(data));
}

BBox mask_to_bbox(const BinaryMask& mask) {
  BBox box{mask.width(), mask.height(), -1, -1};
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      box.x_min = std::min(box.x_min, c);
      box.x_max = std::max(box.x_max, c);
      box.y_min = std::min(box.y_min, r);
      box.y_max = std::max(box.y_max, r);
    }
  }
  if (box.x_max < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixel");
  return box;
}

GroundTruthGrid downsample_gt(const BinaryMask& mask, int d) {
  if (d < 1 || mask.height() < d || mask.width() < d) {
    throw Error(ErrorCode::InvalidGridSize,
                "grid size " + std::to_string(d) + " invalid for " + std::to_string(mask.height()) +
                    "x" + std::to_string(mask.width()) + " mask");
  }
  const auto h = static_cast<long long>(mask.height());
  const auto w = static_cast<long long>(mask.width());
  GroundTruthGrid grid{d, std::vector<std::uint8_t>(static_cast<std::size_t>(d) * d, 0)};
  // pixel row r lies in band floor(r*d/H); bands are the proportional partition
  for (int r = 0; r < mask.height(); ++r) {
    const auto gr = static_cast<std::size_t>(r * static_cast<long long>(d) / h);
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      const auto gc = static_cast<std::size_t>(c * static_cast<long long>(d) / w);
      grid.cells[gr * static_cast<std::size_t>(d) + gc] = 1;
    }
  }
  return grid;
}

void to_json(nlohmann::json& j, const RleMask& rle) {
  j = nlohmann::json{{"h", rle.height}, {"w", rle.width}, {"runs", rle.runs}};
}

void from_json(const nlohmann::json& j, RleMask& rle) {
  if (!j.is_object() || !j.contains("h") || !j.contains("w") || !j.contains("runs")) {
    throw Error(ErrorCode::InvalidMask, "RLE object needs h, w and runs");
  }
  const auto& h = j.at("h");
  const auto& w = j.at("w");
  const auto& runs = j.at("runs");
  if (!h.is_number_integer() || !w.is_number_integer() || !runs.is_array()) {
    throw Error(ErrorCode::InvalidMask, "RLE h/w must be integers and runs an array");
  }
  rle.height = h.get<int>();
  rle.width = w.get<int>();
  rle.runs.clear();
  rle.runs.reserve(runs.size());
  for (const auto& r : runs) {
    if (!r.is_number_integer() || r.get<long long>() < 0 ||
        r.get<long long>() > static_cast<long long>(UINT32_MAX)) {
      throw Error(ErrorCode::InvalidMask, "RLE runs must be non-negative integers");
    }
    rle.runs.push_back(r.get<std::uint32_t>());
  }
}

void to_json(nlohmann::json& j, const BBox& box) {
  j = nlohmann::json{
      {"x_min", box.x_min}, {"y_min", box.y_min}, {"x_max", box.x_max}, {"y_max", box.y_max}};
}

void from_json(const nlohmann::json& j, BBox& box) {
  if (j.is_array() && j.size() == 4) {
    box = BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    return;
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "bbox must be an object or [4]");
  box.x_min = j.at("x_min").get<int>();
  box.y_min = j.at("y_min").get<int>();
  box.x_max = j.at("x_max").get<int>();
  box.y_max = j.at("y_max").get<int>();
}

}  // namespace segcurate
