#include "segcurate/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "segcurate/error.hpp"
#include "segcurate/kernels.hpp"

namespace segcurate {
namespace {

MetricCell cell_of(const MetricsAccumulator& acc) {
  MetricCell c;
  c.n = acc.size();
  if (c.n > 0) c.giou = acc.giou();
  if (acc.cum_union() > 0) c.ciou = acc.ciou();
  return c;
}

}  // namespace

OverlapStat score_overlap(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction and ground truth differ in size");
  }
  const kernels::OverlapCounts counts = kernels::overlap(pred.pixels(), gt.pixels());
  OverlapStat s{1.0, counts.intersection, counts.uni};
  if (counts.uni > 0) {
    s.iou = static_cast<double>(counts.intersection) / static_cast<double>(counts.uni);
  }
  return s;
}

void MetricsAccumulator::update(const BinaryMask& pred, const BinaryMask& gt) {
  add(score_overlap(pred, gt));
}

void MetricsAccumulator::add(const OverlapStat& s) {
  if (!(s.iou >= 0.0 && s.iou <= 1.0) || s.intersection > s.uni) {
    throw Error(ErrorCode::InvalidArgument, "overlap statistics out of range");
  }
  ious_.push_back(s.iou);
  cum_intersection_ += s.intersection;
  cum_union_ += s.uni;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  ious_.insert(ious_.end(), other.ious_.begin(), other.ious_.end());
  cum_intersection_ += other.cum_intersection_;
  cum_union_ += other.cum_union_;
}

double MetricsAccumulator::giou() const {
  if (ious_.empty()) throw Error(ErrorCode::EmptyAccumulator, "no samples accumulated");
  // sorted summation keeps the mean independent of sample order
  std::vector<double> sorted = ious_;
  std::sort(sorted.begin(), sorted.end());
  return std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
}

double MetricsAccumulator::ciou() const {
  if (cum_union_ == 0) throw Error(ErrorCode::ZeroUnion, "cumulative union is zero");
  return static_cast<double>(cum_intersection_) / static_cast<double>(cum_union_);
}

const std::array<Dimension, 4>& dimensions() {
  static const std::array<Dimension, 4> kDims{{
      {"granularity", {"semantic", "instance", "part"}},
      {"multiplicity", {"single", "multiple"}},
      {"reasoning", {"explicit", "implicit"}},
      {"linguistic", {"short", "long"}},
  }};
  return kDims;
}

const std::string& DimensionLabels::operator[](std::size_t dim) const {
  switch (dim) {
    case 0: return granularity;
    case 1: return multiplicity;
    case 2: return reasoning;
    case 3: return linguistic;
    default: throw Error(ErrorCode::InvalidArgument, "dimension index out of range");
  }
}

DimensionReport dimension_report(const std::vector<LabeledOutcome>& samples) {
  const auto& dims = dimensions();
  std::vector<std::vector<MetricsAccumulator>> per_bucket(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) per_bucket[d].resize(dims[d].buckets.size());

  MetricsAccumulator overall;
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const auto& buckets = dims[d].buckets;
      const std::string& label = s.labels[d];
      const auto it = std::find(buckets.begin(), buckets.end(), label);
      if (it == buckets.end()) {
        throw Error(ErrorCode::UnknownBucketLabel, "sample " + s.id + ": '" + label +
                                                       "' is not a " + std::string(dims[d].name) +
                                                       " bucket");
      }
      per_bucket[d][static_cast<std::size_t>(it - buckets.begin())].add(s.overlap);
    }
    overall.add(s.overlap);
  }

  DimensionReport report;
  double giou_sum = 0.0;
  double ciou_sum = 0.0;
  std::size_t giou_n = 0;
  std::size_t ciou_n = 0;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    for (std::size_t b = 0; b < dims[d].buckets.size(); ++b) {
      const MetricCell cell = cell_of(per_bucket[d][b]);
      if (cell.giou) {
        giou_sum += *cell.giou;
        ++giou_n;
      }
      if (cell.ciou) {
        ciou_sum += *cell.ciou;
        ++ciou_n;
      }
      report.buckets.push_back(
          {std::string(dims[d].name), std::string(dims[d].buckets[b]), cell});
    }
  }
  report.overall = cell_of(overall);
  report.bucket_mean.n = samples.size();
  if (giou_n > 0) report.bucket_mean.giou = giou_sum / static_cast<double>(giou_n);
  if (ciou_n > 0) report.bucket_mean.ciou = ciou_sum / static_cast<double>(ciou_n);
  return report;
}

std::string render_table(const DimensionReport& report) {
  const auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return std::string(buf);
  };
  std::vector<std::string> header{"metric"};
  std::vector<std::string> giou{"gIoU"};
  std::vector<std::string> ciou{"cIoU"};
  std::vector<std::string> count{"n"};
  for (const auto& b : report.buckets) {
    std::string label = b.label;
    label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
    header.push_back(label);
    giou.push_back(fmt(b.cell.giou));
    ciou.push_back(fmt(b.cell.ciou));
    count.push_back(std::to_string(b.cell.n));
  }
  header.push_back("All");
  giou.push_back(fmt(report.overall.giou));
  ciou.push_back(fmt(report.overall.ciou));
  count.push_back(std::to_string(report.overall.n));
  header.push_back("BucketMean");
  giou.push_back(fmt(report.bucket_mean.giou));
  ciou.push_back(fmt(report.bucket_mean.ciou));
  count.push_back("-");

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto* row : {&header, &giou, &ciou, &count}) {
    for (std::size_t i = 0; i < row->size(); ++i) widths[i] = std::max(widths[i], (*row)[i].size());
  }
  std::ostringstream out;
  for (const auto* row : {&header, &giou, &ciou, &count}) {
    for (std::size_t i = 0; i < row->size(); ++i) {
      const std::string& v = (*row)[i];
      if (i == 0) {
        out << v << std::string(widths[i] - v.size(), ' ');
      } else {
        out << " | " << std::string(widths[i] - v.size(), ' ') << v;
      }
    }
    out << '\n';
  }
  return out.str();
}

void to_json(nlohmann::json& j, const MetricCell& c) {
  j = nlohmann::json{{"n", c.n}};
  j["giou"] = c.giou ? nlohmann::json(*c.giou) : nlohmann::json(nullptr);
  j["ciou"] = c.ciou ? nlohmann::json(*c.ciou) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const DimensionReport& r) {
  nlohmann::json dims = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& b : r.buckets) {
    dims[b.dimension][b.label] = b.cell;
    order.push_back(b.dimension + "/" + b.label);
  }
  j = nlohmann::json{{"dimensions", dims},
                     {"column_order", order},
                     {"overall", r.overall},
                     {"bucket_mean", r.bucket_mean},
                     {"headline", "overall"}};
}

}  // namespace segcurate
