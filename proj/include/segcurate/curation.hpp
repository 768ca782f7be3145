#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segcurate/geometry.hpp"
#include "segcurate/mask.hpp"

namespace segcurate {

// ---- Stage 1: point-prompt grids -------------------------------------------

struct GridSpec {
  int rows = 0;  // R, laid along the longer side of the region
  int cols = 0;  // C

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct PointPrompt {
  double x = 0.0;
  double y = 0.0;
};

// 4x4 grid of cell centers over the whole image, row-major.
std::vector<PointPrompt> global_grid(int width, int height);

// Grid dimensions for a crop of h x w pixels: elongated crops (aspect >= 2.5)
// get a single line of ceil(aspect) + 1 points, everything else a 4x4 grid.
GridSpec local_grid(int h, int w);

// Cell-center points for local_grid(h, w) inside the crop whose top-left
// pixel is (x0, y0). The R points run along the longer side.
std::vector<PointPrompt> local_points(int x0, int y0, int h, int w);

// ---- Stage 2: automatic filtering ------------------------------------------

bool count_consistency(const BinaryMask& mask, int bbox_count,
                       Connectivity connectivity = Connectivity::Eight);

struct DescriptorStats {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation
};

struct ReferenceStats {
  std::string category;
  std::string convention{kDescriptorConvention};
  int n = 0;
  std::array<DescriptorStats, 5> metrics{};  // ShapeDescriptors::kNames order
};

ReferenceStats reference_stats_from_descriptors(const std::vector<ShapeDescriptors>& values,
                                                std::string category = {});
ReferenceStats derive_reference_stats(const std::vector<BinaryMask>& gold,
                                      std::string category = {});

struct FilterFailure {
  std::string descriptor;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct FilterVerdict {
  bool passed = true;
  std::vector<FilterFailure> failures;
};

inline constexpr double kDefaultSigmaMultiplier = 2.0;

FilterVerdict range_filter(const ShapeDescriptors& d, const ReferenceStats& stats,
                           double k_sigma = kDefaultSigmaMultiplier);

struct Stage2Item {
  std::string id;
  BinaryMask mask;
  int bbox_count = 0;
  std::string category;
};

struct Stage2Config {
  double k_sigma = kDefaultSigmaMultiplier;
  std::map<std::string, double> k_sigma_by_category;
  Connectivity connectivity = Connectivity::Eight;
  unsigned jobs = 1;
};

enum class Stage2Outcome { Kept, DroppedByCount, DroppedByRange };

struct Stage2Result {
  std::string id;
  std::string category;
  Stage2Outcome outcome = Stage2Outcome::Kept;
  int component_count = 0;
  std::optional<ShapeDescriptors> descriptors;  // absent when the count check failed
  FilterVerdict verdict;
};

struct Stage2Summary {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped_by_count = 0;
  std::size_t dropped_by_range = 0;
};

struct Stage2Report {
  std::vector<Stage2Result> items;  // input order
  Stage2Summary summary;
};

Stage2Report run_stage2(const std::vector<Stage2Item>& batch,
                        const std::map<std::string, ReferenceStats>& stats_by_category,
                        const Stage2Config& config = {});

void to_json(nlohmann::json& j, const ReferenceStats& s);
void from_json(const nlohmann::json& j, ReferenceStats& s);
void to_json(nlohmann::json& j, const FilterVerdict& v);
void to_json(nlohmann::json& j, const Stage2Result& r);
void to_json(nlohmann::json& j, const Stage2Summary& s);
void to_json(nlohmann::json& j, const ShapeDescriptors& d);
void to_json(nlohmann::json& j, const PointPrompt& p);

}  // namespace segcurate
