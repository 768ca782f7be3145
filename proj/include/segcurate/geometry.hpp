#pragma once

#include <array>
#include <string_view>

#include "segcurate/mask.hpp"

namespace segcurate {

// Names the conventions behind the descriptor values so that reference
// statistics derived under one convention are never applied under another.
inline constexpr std::string_view kDescriptorConvention =
    "crack-perimeter;corner-hull;principal-axis-reflection-iou;8-connected;v1";

struct MomentSummary {
  double area = 0.0;
  double cx = 0.0;  // centroid, pixel (r, c) has center (c + 0.5, r + 0.5)
  double cy = 0.0;
  double cov_xx = 0.0;  // population second central moments
  double cov_xy = 0.0;
  double cov_yy = 0.0;
};

struct ShapeDescriptors {
  double eccentricity = 0.0;
  double circularity = 0.0;
  double solidity = 0.0;
  double symmetry = 0.0;
  double extent = 0.0;

  static constexpr std::array<std::string_view, 5> kNames{"eccentricity", "circularity",
                                                          "solidity", "symmetry", "extent"};
  // Indexed in kNames order.
  double operator[](std::size_t i) const;
};

MomentSummary moments(const BinaryMask& mask);

// sqrt(1 - l2/l1) of the covariance eigenvalues; 0 when l1 == 0.
double eccentricity(const MomentSummary& m);

// Count of unit pixel edges between foreground and background or the image border.
std::size_t crack_perimeter(const BinaryMask& mask);
// 4*pi*area / perimeter^2
double circularity(const BinaryMask& mask);

// Area of the convex hull of all foreground pixel corners.
double convex_hull_area(const BinaryMask& mask);
double solidity(const BinaryMask& mask);

// Best IoU of the mask against its reflection across either principal axis
// through the centroid; reflected pixel centers snap to the nearest pixel.
double symmetry(const BinaryMask& mask);

double extent(const BinaryMask& mask);

// Largest 8-connected component; ties go to the lowest label.
BinaryMask primary_component(const BinaryMask& mask);

// All five descriptors of the primary component.
ShapeDescriptors describe(const BinaryMask& mask);

}  // namespace segcurate
