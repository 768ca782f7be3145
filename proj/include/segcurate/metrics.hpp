#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "segcurate/mask.hpp"

namespace segcurate {

struct OverlapStat {
  double iou = 0.0;
  std::uint64_t intersection = 0;
  std::uint64_t uni = 0;
};

// IoU with the conventions: both empty -> 1, otherwise empty union impossible.
OverlapStat score_overlap(const BinaryMask& pred, const BinaryMask& gt);

// Mergeable accumulator for gIoU (mean per-sample IoU) and cIoU (cumulative
// intersection over cumulative union).
class MetricsAccumulator {
 public:
  void update(const BinaryMask& pred, const BinaryMask& gt);
  void add(const OverlapStat& s);
  void merge(const MetricsAccumulator& other);

  double giou() const;
  double ciou() const;

  std::size_t size() const noexcept { return ious_.size(); }
  const std::vector<double>& per_sample_ious() const noexcept { return ious_; }
  std::uint64_t cum_intersection() const noexcept { return cum_intersection_; }
  std::uint64_t cum_union() const noexcept { return cum_union_; }

 private:
  std::vector<double> ious_;
  std::uint64_t cum_intersection_ = 0;
  std::uint64_t cum_union_ = 0;
};

// The four evaluation dimensions and their bucket vocabularies, in report
// column order.
struct Dimension {
  std::string_view name;
  std::vector<std::string_view> buckets;
};
const std::array<Dimension, 4>& dimensions();

struct DimensionLabels {
  std::string granularity;   // semantic | instance | part
  std::string multiplicity;  // single | multiple
  std::string reasoning;     // explicit | implicit
  std::string linguistic;    // short | long

  const std::string& operator[](std::size_t dim) const;
};

struct LabeledOutcome {
  std::string id;
  OverlapStat overlap;
  DimensionLabels labels;
};

struct MetricCell {
  std::optional<double> giou;  // absent for an empty bucket
  std::optional<double> ciou;  // absent when the bucket's union is zero
  std::size_t n = 0;
};

struct DimensionReport {
  struct Bucket {
    std::string dimension;
    std::string label;
    MetricCell cell;
  };
  std::vector<Bucket> buckets;  // report column order
  MetricCell overall;           // whole set, computed once
  MetricCell bucket_mean;       // unweighted mean over non-empty buckets
};

DimensionReport dimension_report(const std::vector<LabeledOutcome>& samples);

// Aligned plain-text table, one column per bucket plus the overall value.
std::string render_table(const DimensionReport& report);

void to_json(nlohmann::json& j, const MetricCell& c);
void to_json(nlohmann::json& j, const DimensionReport& r);

}  // namespace segcurate
