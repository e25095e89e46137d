#include "touchfetch/shape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace touchfetch {
namespace {

struct RawMoments {
  double area = 0.0;
  Vec2 first;          // integral of p dA
  double polar = 0.0;  // integral of |p|^2 dA

  RawMoments& add(const RawMoments& o, double sign) {
    area += sign * o.area;
    first += sign * o.first;
    polar += sign * o.polar;
    return *this;
  }
};

RawMoments raw_moments(const std::vector<Vec2>& v) {
  RawMoments m;
  if (v.size() < 3) return m;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 p = v[i], q = v[(i + 1) % v.size()];
    const double c = cross(p, q);
    m.area += 0.5 * c;
    m.first += (c / 6.0) * (p + q);
    m.polar += c * (p.x * p.x + p.x * q.x + q.x * q.x + p.y * p.y + p.y * q.y + q.y * q.y) / 12.0;
  }
  return m;
}

// Sutherland-Hodgman clip of a convex ring against a convex polygon.
std::vector<Vec2> clip(std::vector<Vec2> ring, const ConvexPolygon& by) {
  for (std::size_t e = 0; e < by.size() && !ring.empty(); ++e) {
    const Vec2 a = by.vertex(e), n = by.side_normal(e);
    auto outside = [&](Vec2 p) { return dot(p - a, n); };
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Vec2 p = ring[i], q = ring[(i + 1) % ring.size()];
      const double dp = outside(p), dq = outside(q);
      if (dp <= 0.0) out.push_back(p);
      if ((dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0)) out.push_back(p + (dp / (dp - dq)) * (q - p));
    }
    ring = std::move(out);
  }
  return ring;
}

}  // namespace

FootprintMoments footprint_moments(const std::vector<ConvexPolygon>& pieces) {
  if (pieces.empty()) throw std::invalid_argument("footprint_moments: empty footprint");
  // Inclusion-exclusion over every non-empty subset of pieces; each
  // intersection of convex pieces is convex and clipped exactly.
  RawMoments total;
  const std::size_t n = pieces.size();
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::vector<Vec2> ring;
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask & (std::size_t{1} << i))) continue;
      if (bits++ == 0) {
        const auto v = pieces[i].vertices();
        ring.assign(v.begin(), v.end());
      } else {
        ring = clip(std::move(ring), pieces[i]);
      }
    }
    total.add(raw_moments(ring), bits % 2 == 1 ? 1.0 : -1.0);
  }
  FootprintMoments m;
  m.area = total.area;
  m.centroid = (1.0 / total.area) * total.first;
  m.polar_about_centroid = total.polar - m.area * dot(m.centroid, m.centroid);
  return m;
}

ObjectShape::ObjectShape(std::vector<ShapeSlice> slices, std::string label)
    : slices_(std::move(slices)), label_(std::move(label)) {
  if (slices_.empty()) throw std::invalid_argument("ObjectShape: no slices");
  double prev_hi = 0.0;
  for (const auto& s : slices_) {
    if (s.z_lo < 0.0 || !(s.z_hi > s.z_lo))
      throw std::invalid_argument("ObjectShape: slice z range invalid");
    if (s.z_lo < prev_hi - 1e-12) throw std::invalid_argument("ObjectShape: slices overlap or unsorted");
    if (s.footprint.empty() || s.footprint.size() > kMaxPieces)
      throw std::invalid_argument("ObjectShape: slice must have 1..4 convex pieces");
    prev_hi = s.z_hi;
  }
  if (height() > kMaxHeight + 1e-9) throw std::invalid_argument("ObjectShape: taller than 20 cm");

  std::vector<Vec2> all;
  for (const auto& s : slices_)
    for (const auto& p : s.footprint) all.insert(all.end(), p.vertices().begin(), p.vertices().end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    bounding_radius_ = std::max(bounding_radius_, norm(all[i]));
    for (std::size_t j = i + 1; j < all.size(); ++j) diameter_ = std::max(diameter_, distance(all[i], all[j]));
  }
  if (diameter_ < kMinDiameter - 1e-9 || diameter_ > kMaxDiameter + 1e-9)
    throw std::invalid_argument("ObjectShape: footprint diameter outside [8, 16] cm");

  double vol = 0.0, j_total = 0.0;
  Vec2 weighted;
  std::vector<std::pair<double, FootprintMoments>> per_slice;
  for (const auto& s : slices_) {
    const FootprintMoments m = footprint_moments(s.footprint);
    const double h = s.z_hi - s.z_lo;
    vol += h * m.area;
    weighted += (h * m.area) * m.centroid;
    per_slice.emplace_back(h, m);
  }
  centroid_ = (1.0 / vol) * weighted;
  for (const auto& [h, m] : per_slice) {
    const Vec2 off = m.centroid - centroid_;
    j_total += h * (m.polar_about_centroid + m.area * dot(off, off));
  }
  gyration_ = std::sqrt(j_total / vol);
}

ObjectShape ObjectShape::recentered() const {
  std::vector<ShapeSlice> out = slices_;
  for (auto& s : out)
    for (auto& p : s.footprint) p = p.translated(-centroid_);
  return ObjectShape(std::move(out), label_);
}

}  // namespace touchfetch
