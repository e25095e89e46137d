#include "touchfetch/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace touchfetch {
namespace {

constexpr double kTieTol = 1e-12;

Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + t * ab;
}

void project(const ConvexPolygon& poly, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (Vec2 v : poly.vertices()) {
    const double s = dot(v, axis);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
}

}  // namespace

ConvexPolygon::ConvexPolygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw std::invalid_argument("ConvexPolygon: fewer than 3 vertices");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(vertices_[i].x) || !std::isfinite(vertices_[i].y))
      throw std::invalid_argument("ConvexPolygon: non-finite vertex");
    for (std::size_t j = i + 1; j < n; ++j)
      if (distance(vertices_[i], vertices_[j]) <= kMinVertexGap)
        throw std::invalid_argument("ConvexPolygon: repeated vertex");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = vertices_[(i + 1) % n] - vertices_[i];
    const Vec2 e1 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
    if (cross(e0, e1) <= 1e-12 * norm(e0) * norm(e1))
      throw std::invalid_argument("ConvexPolygon: not strictly convex and counterclockwise");
  }
  // A star-shaped vertex list can pass the local turn test; reject total
  // turning beyond one revolution.
  double turning = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = vertices_[(i + 1) % n] - vertices_[i];
    const Vec2 e1 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
    turning += std::atan2(cross(e0, e1), dot(e0, e1));
  }
  if (std::abs(turning - 2.0 * std::numbers::pi) > 1e-6)
    throw std::invalid_argument("ConvexPolygon: self-intersecting vertex order");
}

ConvexPolygon ConvexPolygon::rectangle(Vec2 lo, Vec2 hi) {
  return ConvexPolygon({{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}});
}

ConvexPolygon ConvexPolygon::regular(int n, double circumradius, Vec2 center, double phase) {
  if (n < 3) throw std::invalid_argument("regular polygon needs n >= 3");
  std::vector<Vec2> v;
  v.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / n;
    v.push_back({center.x + circumradius * std::cos(a), center.y + circumradius * std::sin(a)});
  }
  return ConvexPolygon(std::move(v));
}

Vec2 ConvexPolygon::side_normal(std::size_t i) const {
  const Vec2 e = vertex(i + 1) - vertex(i);
  const double len = norm(e);
  return {e.y / len, -e.x / len};
}

double ConvexPolygon::area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < size(); ++i) a += cross(vertex(i), vertex(i + 1));
  return 0.5 * a;
}

Vec2 ConvexPolygon::centroid() const {
  double a = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec2 p = vertex(i), q = vertex(i + 1);
    const double c = cross(p, q);
    a += c;
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  a *= 0.5;
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

double ConvexPolygon::polar_moment_origin() const {
  double j = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec2 p = vertex(i), q = vertex(i + 1);
    const double c = cross(p, q);
    j += c * (p.x * p.x + p.x * q.x + q.x * q.x + p.y * p.y + p.y * q.y + q.y * q.y);
  }
  return j / 12.0;
}

bool ConvexPolygon::contains(Vec2 p) const { return signed_distance(p) <= 0.0; }

Vec2 ConvexPolygon::closest_point(Vec2 p) const {
  Vec2 best = vertex(0);
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec2 q = closest_on_segment(p, vertex(i), vertex(i + 1));
    const double d = distance(p, q);
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

double ConvexPolygon::signed_distance(Vec2 p) const {
  double max_side = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size(); ++i)
    max_side = std::max(max_side, dot(side_normal(i), p - vertex(i)));
  if (max_side <= 0.0) return max_side;
  return distance(p, closest_point(p));
}

double ConvexPolygon::circumradius(Vec2 about) const {
  double r = 0.0;
  for (Vec2 v : vertices_) r = std::max(r, distance(v, about));
  return r;
}

ConvexPolygon ConvexPolygon::transformed(double theta, Vec2 offset) const {
  std::vector<Vec2> v;
  v.reserve(size());
  for (Vec2 p : vertices_) v.push_back(rotate(p, theta) + offset);
  return ConvexPolygon(std::move(v), Trusted{});
}

ConvexPolygon ConvexPolygon::translated(Vec2 offset) const { return transformed(0.0, offset); }

ConvexPolygon ConvexPolygon::scaled(double s) const {
  std::vector<Vec2> v;
  v.reserve(size());
  if (!(s > 0.0)) throw std::invalid_argument("ConvexPolygon::scaled: factor must be positive");
  for (Vec2 p : vertices_) v.push_back(s * p);
  return ConvexPolygon(std::move(v));
}

std::optional<Penetration> penetration(Vec2 c, double radius, const ConvexPolygon& poly) {
  if (!(radius > 0.0)) throw std::invalid_argument("penetration: radius must be positive");
  double min_gap = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  bool inside = true;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 n = poly.side_normal(i);
    const double gap = dot(n, poly.vertex(i) - c);  // >= 0 when c is on the inner side
    if (gap < 0.0) inside = false;
    if (gap < min_gap - kTieTol) {
      min_gap = gap;
      best = i;
    } else if (std::abs(gap - min_gap) <= kTieTol && n.x > poly.side_normal(best).x + kTieTol) {
      best = i;
    }
  }
  if (inside) return Penetration{min_gap + radius, poly.side_normal(best)};

  const Vec2 q = poly.closest_point(c);
  const double d = distance(c, q);
  if (d >= radius) return std::nullopt;
  return Penetration{radius - d, (1.0 / d) * (c - q)};
}

std::optional<Penetration> polygon_overlap(const ConvexPolygon& a, const ConvexPolygon& b) {
  Penetration best{std::numeric_limits<double>::infinity(), {}};
  auto test_axis = [&](Vec2 axis) {
    double alo, ahi, blo, bhi;
    project(a, axis, alo, ahi);
    project(b, axis, blo, bhi);
    const double push_pos = ahi - blo;  // move b along +axis
    const double push_neg = bhi - alo;  // move b along -axis
    const double depth = std::min(push_pos, push_neg);
    if (depth < best.depth) {
      best.depth = depth;
      best.normal = push_pos <= push_neg ? axis : -axis;
    }
  };
  for (std::size_t i = 0; i < a.size(); ++i) test_axis(a.side_normal(i));
  for (std::size_t i = 0; i < b.size(); ++i) test_axis(b.side_normal(i));
  if (best.depth <= 0.0) return std::nullopt;
  return best;
}

double polygon_distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (polygon_overlap(a, b)) return 0.0;
  double d = std::numeric_limits<double>::infinity();
  for (Vec2 v : a.vertices()) d = std::min(d, distance(v, b.closest_point(v)));
  for (Vec2 v : b.vertices()) d = std::min(d, distance(v, a.closest_point(v)));
  return d;
}

bool strictly_inside_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const double d1 = cross(b - a, p - a);
  const double d2 = cross(c - b, p - b);
  const double d3 = cross(a - c, p - c);
  return (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0);
}

double normalize_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta + std::numbers::pi, two_pi);
  if (t < 0.0) t += two_pi;
  double out = t - std::numbers::pi;
  if (out >= std::numbers::pi) out -= two_pi;
  return out;
}

}  // namespace touchfetch
