#include "segcurate/curation.hpp"

#include <cmath>
#include <string>

#include "segcurate/error.hpp"
#include "segcurate/parallel.hpp"

namespace segcurate {

std::vector<PointPrompt> global_grid(int width, int height) {
  constexpr int kSide = 4;
  if (width < kSide || height < kSide) {
    throw Error(ErrorCode::RegionTooSmall, "global grid needs at least 4x4 pixels, got " +
                                               std::to_string(width) + "x" + std::to_string(height));
  }
  std::vector<PointPrompt> points;
  points.reserve(kSide * kSide);
  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) {
      points.push_back({(2.0 * c + 1.0) * width / (2.0 * kSide),
                        (2.0 * r + 1.0) * height / (2.0 * kSide)});
    }
  }
  return points;
}

GridSpec local_grid(int h, int w) {
  if (h < 1 || w < 1) throw Error(ErrorCode::InvalidArgument, "crop dimensions must be >= 1");
  const long long longer = std::max(h, w);
  const long long shorter = std::min(h, w);
  // aspect >= 2.5  <=>  2 * longer >= 5 * shorter, kept in integers so the
  // boundary is exact
  if (2 * longer >= 5 * shorter) {
    const long long ceil_aspect = (longer + shorter - 1) / shorter;
    return {static_cast<int>(ceil_aspect + 1), 1};
  }
  return {4, 4};
}

std::vector<PointPrompt> local_points(int x0, int y0, int h, int w) {
  const GridSpec spec = local_grid(h, w);
  const bool horizontal = w >= h;
  const int along = spec.rows;
  const int across = spec.cols;
  const double long_len = horizontal ? w : h;
  const double short_len = horizontal ? h : w;
  std::vector<PointPrompt> points;
  points.reserve(static_cast<std::size_t>(along) * static_cast<std::size_t>(across));
  for (int i = 0; i < along; ++i) {
    const double a = (2.0 * i + 1.0) * long_len / (2.0 * along);
    for (int j = 0; j < across; ++j) {
      const double b = (2.0 * j + 1.0) * short_len / (2.0 * across);
      points.push_back(horizontal ? PointPrompt{x0 + a, y0 + b} : PointPrompt{x0 + b, y0 + a});
    }
  }
  return points;
}

bool count_consistency(const BinaryMask& mask, int bbox_count, Connectivity connectivity) {
  if (bbox_count < 0) throw Error(ErrorCode::InvalidArgument, "bbox_count must be >= 0");
  const int count = connected_components(mask, connectivity).count;
  return count >= 1 && count == bbox_count;
}

ReferenceStats reference_stats_from_descriptors(const std::vector<ShapeDescriptors>& values,
                                                std::string category) {
  if (values.size() < 2) {
    throw Error(ErrorCode::InsufficientGold,
                "need at least 2 gold masks, got " + std::to_string(values.size()));
  }
  ReferenceStats stats;
  stats.category = std::move(category);
  stats.n = static_cast<int>(values.size());
  const auto n = static_cast<double>(values.size());
  for (std::size_t k = 0; k < ShapeDescriptors::kNames.size(); ++k) {
    double sum = 0.0;
    for (const auto& v : values) sum += v[k];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& v : values) ss += (v[k] - mean) * (v[k] - mean);
    stats.metrics[k] = {mean, std::sqrt(ss / (n - 1.0))};
  }
  return stats;
}

ReferenceStats derive_reference_stats(const std::vector<BinaryMask>& gold, std::string category) {
  if (gold.size() < 2) {
    throw Error(ErrorCode::InsufficientGold,
                "need at least 2 gold masks, got " + std::to_string(gold.size()));
  }
  std::vector<ShapeDescriptors> values;
  values.reserve(gold.size());
  for (const auto& m : gold) values.push_back(describe(m));
  return reference_stats_from_descriptors(values, std::move(category));
}

FilterVerdict range_filter(const ShapeDescriptors& d, const ReferenceStats& stats, double k_sigma) {
  if (k_sigma < 0.0) throw Error(ErrorCode::InvalidArgument, "k_sigma must be >= 0");
  FilterVerdict verdict;
  for (std::size_t k = 0; k < ShapeDescriptors::kNames.size(); ++k) {
    const DescriptorStats& s = stats.metrics[k];
    const double lower = s.mean - k_sigma * s.std;
    const double upper = s.mean + k_sigma * s.std;
    const double value = d[k];
    if (!(value >= lower && value <= upper)) {
      verdict.failures.push_back({std::string(ShapeDescriptors::kNames[k]), value, lower, upper});
    }
  }
  verdict.passed = verdict.failures.empty();
  return verdict;
}

Stage2Report run_stage2(const std::vector<Stage2Item>& batch,
                        const std::map<std::string, ReferenceStats>& stats_by_category,
                        const Stage2Config& config) {
  for (const auto& item : batch) {
    if (!stats_by_category.contains(item.category)) {
      throw Error(ErrorCode::MissingCategoryStats,
                  "no reference stats for category '" + item.category + "' (item " + item.id + ")");
    }
  }

  Stage2Report report;
  report.items.resize(batch.size());
  parallel_for(batch.size(), config.jobs, [&](std::size_t i) {
    const Stage2Item& item = batch[i];
    Stage2Result& out = report.items[i];
    out.id = item.id;
    out.category = item.category;
    out.component_count = connected_components(item.mask, config.connectivity).count;
    if (out.component_count < 1 || out.component_count != item.bbox_count) {
      out.outcome = Stage2Outcome::DroppedByCount;
      const auto expected = static_cast<double>(item.bbox_count);
      out.verdict.failures.push_back(
          {"component_count", static_cast<double>(out.component_count), expected, expected});
      out.verdict.passed = false;
      return;
    }
    const auto ks = config.k_sigma_by_category.find(item.category);
    const double k_sigma = ks == config.k_sigma_by_category.end() ? config.k_sigma : ks->second;
    out.descriptors = describe(item.mask);
    out.verdict = range_filter(*out.descriptors, stats_by_category.at(item.category), k_sigma);
    out.outcome = out.verdict.passed ? Stage2Outcome::Kept : Stage2Outcome::DroppedByRange;
  });

  report.summary.input = batch.size();
  for (const auto& r : report.items) {
    switch (r.outcome) {
      case Stage2Outcome::Kept: ++report.summary.kept; break;
      case Stage2Outcome::DroppedByCount: ++report.summary.dropped_by_count; break;
      case Stage2Outcome::DroppedByRange: ++report.summary.dropped_by_range; break;
    }
  }
  return report;
}

void to_json(nlohmann::json& j, const ReferenceStats& s) {
  nlohmann::json metrics = nlohmann::json::object();
  for (std::size_t k = 0; k < ShapeDescriptors::kNames.size(); ++k) {
    metrics[std::string(ShapeDescriptors::kNames[k])] = {{"mean", s.metrics[k].mean},
                                                         {"std", s.metrics[k].std}};
  }
  j = nlohmann::json{
      {"category", s.category}, {"convention", s.convention}, {"n", s.n}, {"metrics", metrics}};
}

void from_json(const nlohmann::json& j, ReferenceStats& s) {
  try {
    s.category = j.at("category").get<std::string>();
    s.convention = j.at("convention").get<std::string>();
    s.n = j.at("n").get<int>();
    const auto& metrics = j.at("metrics");
    for (std::size_t k = 0; k < ShapeDescriptors::kNames.size(); ++k) {
      const auto& m = metrics.at(std::string(ShapeDescriptors::kNames[k]));
      s.metrics[k] = {m.at("mean").get<double>(), m.at("std").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad reference stats: ") + e.what());
  }
  if (s.n < 2) throw Error(ErrorCode::InsufficientGold, "reference stats need n >= 2");
  for (const auto& m : s.metrics) {
    if (m.std < 0.0) throw Error(ErrorCode::InvalidArgument, "reference std must be >= 0");
  }
}

void to_json(nlohmann::json& j, const FilterVerdict& v) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : v.failures) {
    failures.push_back(
        {{"descriptor", f.descriptor}, {"value", f.value}, {"lower", f.lower}, {"upper", f.upper}});
  }
  j = nlohmann::json{{"passed", v.passed}, {"failures", failures}};
}

void to_json(nlohmann::json& j, const ShapeDescriptors& d) {
  j = nlohmann::json::object();
  for (std::size_t k = 0; k < ShapeDescriptors::kNames.size(); ++k) {
    j[std::string(ShapeDescriptors::kNames[k])] = d[k];
  }
}

void to_json(nlohmann::json& j, const Stage2Result& r) {
  static constexpr const char* kOutcome[] = {"kept", "dropped_by_count", "dropped_by_range"};
  j = nlohmann::json{{"id", r.id},
                     {"category", r.category},
                     {"outcome", kOutcome[static_cast<int>(r.outcome)]},
                     {"component_count", r.component_count},
                     {"verdict", r.verdict}};
  if (r.descriptors) j["descriptors"] = *r.descriptors;
}

void to_json(nlohmann::json& j, const Stage2Summary& s) {
  j = nlohmann::json{{"input", s.input},
                     {"kept", s.kept},
                     {"dropped_by_count", s.dropped_by_count},
                     {"dropped_by_range", s.dropped_by_range}};
}

void to_json(nlohmann::json& j, const PointPrompt& p) { j = nlohmann::json{{"x", p.x}, {"y", p.y}}; }

}  // namespace segcurate
