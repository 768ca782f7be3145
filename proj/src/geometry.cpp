#include "segcurate/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "segcurate/error.hpp"

namespace segcurate {
namespace {

void require_foreground(const BinaryMask& mask) {
  if (mask.empty() || !mask.any()) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixel");
}

__extension__ using i128 = __int128;

// Exact central moments in doubled pixel-center coordinates relative to the
// bounding-box origin: u = 2*(c - x_min) + 1, v = 2*(r - y_min) + 1. Integer
// arithmetic keeps the result independent of where the shape sits in the image.
struct ExactMoments {
  long long n = 0;
  long long su = 0;
  long long sv = 0;
  i128 suu = 0;
  i128 suv = 0;
  i128 svv = 0;
  BBox box;

  // n^2 * covariance * 4, i.e. n*sum(u^2) - (sum u)^2
  i128 a() const { return static_cast<i128>(n) * suu - static_cast<i128>(su) * su; }
  i128 b() const { return static_cast<i128>(n) * suv - static_cast<i128>(su) * sv; }
  i128 c() const { return static_cast<i128>(n) * svv - static_cast<i128>(sv) * sv; }
};

ExactMoments exact_moments(const BinaryMask& mask) {
  ExactMoments m;
  m.box = mask_to_bbox(mask);
  for (int r = m.box.y_min; r <= m.box.y_max; ++r) {
    for (int c = m.box.x_min; c <= m.box.x_max; ++c) {
      if (!mask.at(r, c)) continue;
      const long long u = 2LL * (c - m.box.x_min) + 1;
      const long long v = 2LL * (r - m.box.y_min) + 1;
      ++m.n;
      m.su += u;
      m.sv += v;
      m.suu += static_cast<i128>(u) * u;
      m.suv += static_cast<i128>(u) * v;
      m.svv += static_cast<i128>(v) * v;
    }
  }
  return m;
}

struct Eigen2 {
  double major = 0.0;
  double minor = 0.0;
};

Eigen2 eigenvalues(double a, double b, double c) {
  const double mean = 0.5 * (a + c);
  const double half_diff = 0.5 * (a - c);
  const double radius = std::hypot(half_diff, b);
  return {mean + radius, std::max(0.0, mean - radius)};
}

long long pack(long long row, long long col) {
  return (row << 32) ^ (col & 0xffffffffLL);
}

// Nearest pixel index for a coordinate in pixel-center space (pixel k has its
// center at k + 0.5). Exact ties go toward the centroid so that the snap is
// equivariant under rotations and reflections of the raster.
long long snap(double coord, double centroid) {
  const double t = coord - 0.5;
  const double lower = std::floor(t);
  const double frac = t - lower;
  constexpr double kTie = 1e-9;
  if (std::abs(frac - 0.5) < kTie) {
    return static_cast<long long>(centroid - 0.5 < t ? lower : lower + 1.0);
  }
  return static_cast<long long>(frac < 0.5 ? lower : lower + 1.0);
}

double reflection_iou(const std::vector<long long>& cells, const std::vector<std::array<double, 2>>& centers,
                      double cx, double cy, double ux, double uy) {
  std::vector<long long> reflected;
  reflected.reserve(centers.size());
  for (const auto& p : centers) {
    const double dx = p[0] - cx;
    const double dy = p[1] - cy;
    const double along = dx * ux + dy * uy;
    const double rx = cx + 2.0 * along * ux - dx;
    const double ry = cy + 2.0 * along * uy - dy;
    reflected.push_back(pack(snap(ry, cy), snap(rx, cx)));
  }
  std::sort(reflected.begin(), reflected.end());
  reflected.erase(std::unique(reflected.begin(), reflected.end()), reflected.end());

  std::size_t inter = 0;
  auto i = cells.begin();
  auto j = reflected.begin();
  while (i != cells.end() && j != reflected.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = cells.size() + reflected.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double ShapeDescriptors::operator[](std::size_t i) const {
  switch (i) {
    case 0: return eccentricity;
    case 1: return circularity;
    case 2: return solidity;
    case 3: return symmetry;
    case 4: return extent;
    default: throw Error(ErrorCode::InvalidArgument, "descriptor index out of range");
  }
}

MomentSummary moments(const BinaryMask& mask) {
  require_foreground(mask);
  const ExactMoments m = exact_moments(mask);
  const auto n = static_cast<double>(m.n);
  const double n2x4 = 4.0 * n * n;
  MomentSummary out;
  out.area = n;
  out.cx = m.box.x_min + static_cast<double>(m.su) / (2.0 * n);
  out.cy = m.box.y_min + static_cast<double>(m.sv) / (2.0 * n);
  out.cov_xx = static_cast<double>(m.a()) / n2x4;
  out.cov_xy = static_cast<double>(m.b()) / n2x4;
  out.cov_yy = static_cast<double>(m.c()) / n2x4;
  return out;
}

double eccentricity(const MomentSummary& m) {
  const Eigen2 ev = eigenvalues(m.cov_xx, m.cov_xy, m.cov_yy);
  if (ev.major <= 0.0) return 0.0;
  const double ratio = std::clamp(ev.minor / ev.major, 0.0, 1.0);
  return std::sqrt(1.0 - ratio);
}

std::size_t crack_perimeter(const BinaryMask& mask) {
  std::size_t edges = 0;
  const int h = mask.height();
  const int w = mask.width();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      edges += (r == 0 || !mask.at(r - 1, c)) ? 1 : 0;
      edges += (r == h - 1 || !mask.at(r + 1, c)) ? 1 : 0;
      edges += (c == 0 || !mask.at(r, c - 1)) ? 1 : 0;
      edges += (c == w - 1 || !mask.at(r, c + 1)) ? 1 : 0;
    }
  }
  return edges;
}

double circularity(const BinaryMask& mask) {
  require_foreground(mask);
  const auto area = static_cast<double>(mask.area());
  const auto perimeter = static_cast<double>(crack_perimeter(mask));
  return 4.0 * std::numbers::pi * area / (perimeter * perimeter);
}

double convex_hull_area(const BinaryMask& mask) {
  require_foreground(mask);
  using Point = std::array<long long, 2>;
  // Only the outermost corners of each row can be hull vertices.
  std::vector<Point> pts;
  for (int r = 0; r < mask.height(); ++r) {
    int first = -1;
    int last = -1;
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      if (first < 0) first = c;
      last = c;
    }
    if (first < 0) continue;
    pts.push_back({first, r});
    pts.push_back({first, r + 1});
    pts.push_back({last + 1, r});
    pts.push_back({last + 1, r + 1});
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  const auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  // Andrew's monotone chain, counter-clockwise, collinear points dropped.
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);

  long long twice = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % hull.size()];
    twice += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(static_cast<double>(twice)) / 2.0;
}

double solidity(const BinaryMask& mask) {
  const double hull = convex_hull_area(mask);
  return std::min(1.0, static_cast<double>(mask.area()) / hull);
}

double symmetry(const BinaryMask& mask) {
  const ExactMoments m = exact_moments(mask);
  // Everything below works in bbox-relative pixel-center coordinates.
  std::vector<long long> cells;
  std::vector<std::array<double, 2>> centers;
  cells.reserve(static_cast<std::size_t>(m.n));
  centers.reserve(static_cast<std::size_t>(m.n));
  for (int r = m.box.y_min; r <= m.box.y_max; ++r) {
    for (int c = m.box.x_min; c <= m.box.x_max; ++c) {
      if (!mask.at(r, c)) continue;
      const long long row = r - m.box.y_min;
      const long long col = c - m.box.x_min;
      cells.push_back(pack(row, col));
      centers.push_back({static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5});
    }
  }
  std::sort(cells.begin(), cells.end());

  const auto n = static_cast<double>(m.n);
  const double cx = static_cast<double>(m.su) / (2.0 * n);
  const double cy = static_cast<double>(m.sv) / (2.0 * n);

  // Isotropic covariance has no preferred axis; fall back to the raster axes.
  double theta = 0.0;
  if (!(m.a() == m.c() && m.b() == 0)) {
    theta = 0.5 * std::atan2(2.0 * static_cast<double>(m.b()),
                             static_cast<double>(m.a()) - static_cast<double>(m.c()));
  }
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  const double major = reflection_iou(cells, centers, cx, cy, ux, uy);
  const double minor = reflection_iou(cells, centers, cx, cy, -uy, ux);
  return std::max(major, minor);
}

double extent(const BinaryMask& mask) {
  require_foreground(mask);
  const BBox box = mask_to_bbox(mask);
  return static_cast<double>(mask.area()) / static_cast<double>(box.area());
}

BinaryMask primary_component(const BinaryMask& mask) {
  require_foreground(mask);
  const ComponentLabeling labels = connected_components(mask, Connectivity::Eight);
  if (labels.count == 1) return mask;
  const auto it = std::max_element(labels.sizes.begin(), labels.sizes.end());
  return extract_component(labels, static_cast<int>(it - labels.sizes.begin()) + 1);
}

ShapeDescriptors describe(const BinaryMask& mask) {
  const BinaryMask primary = primary_component(mask);
  ShapeDescriptors d;
  d.eccentricity = eccentricity(moments(primary));
  d.circularity = circularity(primary);
  d.solidity = solidity(primary);
  d.symmetry = symmetry(primary);
  d.extent = extent(primary);
  return d;
}

}  // namespace segcurate
