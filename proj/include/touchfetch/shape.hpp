#pragma once

#include <string>
#include <vector>

#include "touchfetch/geometry.hpp"

namespace touchfetch {

// One horizontal layer of an extruded object: a union of convex pieces in the
// object frame, occupying z in [z_lo, z_hi].
struct ShapeSlice {
  double z_lo = 0.0;
  double z_hi = 0.0;
  std::vector<ConvexPolygon> footprint;
};

struct FootprintMoments {
  double area = 0.0;
  Vec2 centroid;
  double polar_about_centroid = 0.0;
};

// Exact area moments of a union of convex pieces (overlaps counted once).
FootprintMoments footprint_moments(const std::vector<ConvexPolygon>& pieces);

// Height-sliced rigid object. Invariants are checked on construction:
// slices sorted and disjoint in z, z_lo >= 0, total height <= 20 cm,
// 1..4 pieces per slice, planar diameter in [8, 16] cm.
class ObjectShape {
 public:
  static constexpr double kMaxHeight = 20.0;
  static constexpr double kMinDiameter = 8.0;
  static constexpr double kMaxDiameter = 16.0;
  static constexpr std::size_t kMaxPieces = 4;

  ObjectShape(std::vector<ShapeSlice> slices, std::string label);

  // Same shape translated so the volume centroid sits at the frame origin.
  ObjectShape recentered() const;

  const std::vector<ShapeSlice>& slices() const { return slices_; }
  const std::string& label() const { return label_; }
  double height() const { return slices_.back().z_hi; }
  double diameter() const { return diameter_; }
  // Largest distance from the frame origin to any footprint vertex.
  double bounding_radius() const { return bounding_radius_; }
  double radius_of_gyration() const { return gyration_; }
  Vec2 volume_centroid() const { return centroid_; }

 private:
  std::vector<ShapeSlice> slices_;
  std::string label_;
  double diameter_ = 0.0;
  double bounding_radius_ = 0.0;
  double gyration_ = 0.0;
  Vec2 centroid_;
};

}  // namespace touchfetch
