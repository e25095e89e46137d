#pragma once

// Planar and spatial geometry for object footprints and the spherical
// fingertip. All lengths are centimetres.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace touchfetch {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  constexpr Vec3& operator+=(Vec3 o) { x += o.x; y += o.y; z += o.z; return *this; }
  friend constexpr bool operator==(Vec3, Vec3) = default;

  constexpr Vec2 xy() const { return {x, y}; }
};

inline constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// Strictly convex, counterclockwise polygon. Construction validates the
// invariants and throws std::invalid_argument on violation.
class ConvexPolygon {
 public:
  static constexpr double kMinVertexGap = 1e-6;

  explicit ConvexPolygon(std::vector<Vec2> vertices);

  static ConvexPolygon rectangle(Vec2 lo, Vec2 hi);
  // Regular n-gon with the given circumradius, first vertex at `phase`.
  static ConvexPolygon regular(int n, double circumradius, Vec2 center = {}, double phase = 0.0);

  std::span<const Vec2> vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  Vec2 vertex(std::size_t i) const { return vertices_[i % vertices_.size()]; }
  // Outward unit normal of side i (from vertex i to vertex i+1).
  Vec2 side_normal(std::size_t i) const;

  double area() const;
  Vec2 centroid() const;
  // Polar second moment of area about the origin.
  double polar_moment_origin() const;
  bool contains(Vec2 p) const;
  // Closest boundary point and its distance (> 0 outside, 0 on boundary).
  Vec2 closest_point(Vec2 p) const;
  // Negative inside: minus the distance to the nearest side line.
  double signed_distance(Vec2 p) const;
  double circumradius(Vec2 about) const;

  ConvexPolygon transformed(double theta, Vec2 offset) const;
  ConvexPolygon translated(Vec2 offset) const;
  ConvexPolygon scaled(double s) const;

 private:
  struct Trusted {};
  ConvexPolygon(std::vector<Vec2> vertices, Trusted) : vertices_(std::move(vertices)) {}

  std::vector<Vec2> vertices_;
};

struct Penetration {
  double depth = 0.0;
  Vec2 normal;  // unit, from the polygon boundary toward the circle centre
};

// Overlap of a circle with a convex polygon, or nullopt when they are
// separated or merely touching. Ties between equally near sides prefer the
// normal with the larger x component, then the lower side index.
std::optional<Penetration> penetration(Vec2 circle_center, double radius, const ConvexPolygon& poly);

// Separating-axis overlap depth of two convex polygons (> 0 when they
// overlap) and the axis along which `b` must move to separate from `a`.
std::optional<Penetration> polygon_overlap(const ConvexPolygon& a, const ConvexPolygon& b);

// Euclidean gap between two convex polygons (0 if they intersect).
double polygon_distance(const ConvexPolygon& a, const ConvexPolygon& b);

// Strict containment in the triangle (a, b, c) of either winding.
bool strictly_inside_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c);

double normalize_angle(double theta);  // to [-pi, pi)

}  // namespace touchfetch
