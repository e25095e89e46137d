#include "touchfetch/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace touchfetch {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Beyond this bounding-cylinder gap the exact prism query is skipped.
constexpr double kExactQueryBand = 1.5;

struct LocalHit {
  double sd = kInf;  // sphere-surface clearance, negative when overlapping
  Vec3 normal;       // body frame
};

LocalHit query_piece(const ConvexPolygon& poly, double lo, double hi, Vec3 c, double r) {
  const Vec2 cxy = c.xy();
  const double sd_xy = poly.signed_distance(cxy);
  LocalHit hit;
  if (sd_xy <= 0.0 && c.z >= lo && c.z <= hi) {
    const double lateral = -sd_xy;
    const double top = hi - c.z;
    const double bottom = c.z - lo;
    if (lateral <= top && lateral <= bottom) {
      const auto pen = penetration(cxy, r, poly);
      hit.normal = {pen->normal.x, pen->normal.y, 0.0};
      hit.sd = -(lateral + r);
    } else if (top <= bottom) {
      hit.normal = {0.0, 0.0, 1.0};
      hit.sd = -(top + r);
    } else {
      hit.normal = {0.0, 0.0, -1.0};
      hit.sd = -(bottom + r);
    }
    return hit;
  }
  const Vec2 qxy = sd_xy <= 0.0 ? cxy : poly.closest_point(cxy);
  const Vec3 q{qxy.x, qxy.y, std::clamp(c.z, lo, hi)};
  const Vec3 v = c - q;
  const double dist = norm(v);
  hit.sd = dist - r;
  hit.normal = dist > 0.0 ? (1.0 / dist) * v : Vec3{0.0, 0.0, 1.0};
  return hit;
}

LocalHit query_body(const BodyState& b, Vec3 world_center, double r) {
  const Vec2 local_xy = b.pose.to_local(world_center.xy());
  const Vec3 c{local_xy.x, local_xy.y, world_center.z};
  LocalHit best;
  for (const auto& s : b.shape.slices()) {
    if (c.z < s.z_lo - r - kExactQueryBand || c.z > s.z_hi + r + kExactQueryBand) continue;
    for (const auto& poly : s.footprint) {
      const LocalHit h = query_piece(poly, s.z_lo, s.z_hi, c, r);
      if (h.sd < best.sd) best = h;
    }
  }
  if (best.sd < kInf) {
    const Vec2 n = rotate({best.normal.x, best.normal.y}, b.pose.theta);
    best.normal = {n.x, n.y, best.normal.z};
  }
  return best;
}

double bound_gap(const BodyState& b, Vec3 c, double r) {
  const double horizontal = distance(c.xy(), b.pose.position()) - b.shape.bounding_radius();
  const double vertical = c.z - b.shape.height();
  return std::max({horizontal, vertical, 0.0}) - r;
}

Vec2 world_centroid(const BodyState& b) { return b.pose.to_world(b.shape.volume_centroid()); }

bool z_overlap(const ShapeSlice& a, const ShapeSlice& b) { return a.z_lo < b.z_hi && b.z_lo < a.z_hi; }

// Deepest footprint overlap between bodies a and b; normal is the direction
// b must move to separate.
std::optional<Penetration> body_overlap(const BodyState& a, const BodyState& b) {
  const double reach = a.shape.bounding_radius() + b.shape.bounding_radius();
  if (distance(a.pose.position(), b.pose.position()) >= reach) return std::nullopt;
  std::optional<Penetration> best;
  for (const auto& sa : a.shape.slices())
    for (const auto& sb : b.shape.slices()) {
      if (!z_overlap(sa, sb)) continue;
      for (const auto& pa : sa.footprint) {
        const ConvexPolygon wa = pa.transformed(a.pose.theta, a.pose.position());
        for (const auto& pb : sb.footprint) {
          const ConvexPolygon wb = pb.transformed(b.pose.theta, b.pose.position());
          if (auto o = polygon_overlap(wa, wb); o && (!best || o->depth > best->depth)) best = o;
        }
      }
    }
  return best;
}

}  // namespace

double push_beta(double mass, double friction, double kappa) {
  return 1.0 / (1.0 + kappa * friction * mass);
}

Pose push_response(const BodyState& body, Vec2 contact_point, double depth, Vec2 direction, double kappa) {
  const double beta = push_beta(body.mass, body.friction, kappa);
  const Vec2 centroid = world_centroid(body);
  const Vec2 r = contact_point - centroid;
  const double rho = body.shape.radius_of_gyration();
  const Vec2 dt = (beta * depth) * direction;
  const double dtheta = beta * depth * cross(r, direction) / (dot(r, r) + rho * rho);
  // Rotate about the centroid, then translate.
  const Vec2 origin = body.pose.position();
  const Vec2 new_origin = centroid + rotate(origin - centroid, dtheta) + dt;
  return Pose{new_origin.x, new_origin.y, normalize_angle(body.pose.theta + dtheta)};
}

Scene::Scene(double bin_side, std::vector<BodyState> bodies, bool static_mode, PhysicsParams physics)
    : bin_side_(bin_side), bodies_(std::move(bodies)), static_mode_(static_mode), physics_(physics) {
  if (!(bin_side_ > 0.0)) throw std::invalid_argument("Scene: bin_side must be positive");
  for (auto& b : bodies_) {
    if (!(b.mass > 0.0) || !(b.friction > 0.0))
      throw std::invalid_argument("Scene: body mass and friction must be positive");
    b.pose.theta = normalize_angle(b.pose.theta);
    b.initial_pose.theta = normalize_angle(b.initial_pose.theta);
  }
}

std::vector<ConvexPolygon> Scene::world_footprint(std::size_t i) const {
  const BodyState& b = bodies_.at(i);
  std::vector<ConvexPolygon> out;
  for (const auto& s : b.shape.slices())
    for (const auto& p : s.footprint) out.push_back(p.transformed(b.pose.theta, b.pose.position()));
  return out;
}

double Scene::footprint_gap(std::size_t i, std::size_t j) const {
  double gap = kInf;
  for (const auto& a : world_footprint(i))
    for (const auto& b : world_footprint(j)) gap = std::min(gap, polygon_distance(a, b));
  return gap;
}

double Scene::clearance(std::size_t i, Vec3 center, double radius) const {
  return query_body(bodies_.at(i), center, radius).sd;
}

std::optional<BodyContact> Scene::deepest_contact(Vec3 center, double radius) const {
  std::optional<BodyContact> best;
  for (std::size_t i = 0; i < bodies_.size(); ++i) {
    if (bound_gap(bodies_[i], center, radius) > 0.0) continue;
    const LocalHit h = query_body(bodies_[i], center, radius);
    if (h.sd < 0.0 && (!best || -h.sd > best->depth))
      best = BodyContact{static_cast<int>(i), -h.sd, h.normal};
  }
  return best;
}

double Scene::free_distance(Vec3 center, double radius) const {
  double free = kInf;
  for (const auto& b : bodies_) {
    const double coarse = bound_gap(b, center, radius);
    if (coarse > kExactQueryBand) {
      free = std::min(free, coarse);
      continue;
    }
    free = std::min(free, query_body(b, center, radius).sd);
  }
  return free;
}

double Scene::beta(std::size_t i) const {
  if (static_mode_) return 0.0;
  const BodyState& b = bodies_.at(i);
  return push_beta(b.mass, b.friction, physics_.kappa);
}

bool Scene::inside_bin(Vec2 p) const {
  return p.x >= 0.0 && p.x <= bin_side_ && p.y >= 0.0 && p.y <= bin_side_;
}

void Scene::set_pose(std::size_t i, Pose p) {
  p.theta = normalize_angle(p.theta);
  bodies_.at(i).pose = p;
}

void Scene::clamp_into_bin(std::size_t i) {
  BodyState& b = bodies_[i];
  double lo_x = kInf, lo_y = kInf, hi_x = -kInf, hi_y = -kInf;
  for (const auto& s : b.shape.slices())
    for (const auto& p : s.footprint)
      for (Vec2 v : p.vertices()) {
        const Vec2 w = b.pose.to_world(v);
        lo_x = std::min(lo_x, w.x);
        lo_y = std::min(lo_y, w.y);
        hi_x = std::max(hi_x, w.x);
        hi_y = std::max(hi_y, w.y);
      }
  if (lo_x < 0.0) b.pose.x -= lo_x;
  else if (hi_x > bin_side_) b.pose.x -= hi_x - bin_side_;
  if (lo_y < 0.0) b.pose.y -= lo_y;
  else if (hi_y > bin_side_) b.pose.y -= hi_y - bin_side_;
}

void Scene::resolve_body_overlaps(std::size_t moved) {
  std::vector<std::size_t> active{moved};
  for (int pass = 0; pass < 8 && !active.empty(); ++pass) {
    std::vector<std::size_t> next;
    for (std::size_t a : active) {
      for (std::size_t b = 0; b < bodies_.size(); ++b) {
        if (b == a) continue;
        const auto o = body_overlap(bodies_[a], bodies_[b]);
        if (!o) continue;
        BodyState& pushed = bodies_[b];
        const Pose np = push_response(pushed, world_centroid(pushed), o->depth, o->normal, physics_.kappa);
        pushed.pose = np;
        clamp_into_bin(b);
        next.push_back(b);
        if (const auto rest = body_overlap(bodies_[a], bodies_[b])) {
          BodyState& pusher = bodies_[a];
          pusher.pose.x -= rest->depth * rest->normal.x;
          pusher.pose.y -= rest->depth * rest->normal.y;
          clamp_into_bin(a);
        }
      }
    }
    active = std::move(next);
  }
}

Vec2 Scene::push(std::size_t i, Vec2 contact_point, double depth, Vec2 direction) {
  if (static_mode_ || depth <= 0.0) return {};
  BodyState& b = bodies_.at(i);
  const Vec2 before = b.pose.position();
  b.pose = push_response(b, contact_point, depth, direction, physics_.kappa);
  clamp_into_bin(i);
  resolve_body_overlaps(i);
  return bodies_[i].pose.position() - before;
}

namespace {

// One fingertip travelling a straight commanded path.
class FingerMotion {
 public:
  FingerMotion(Finger& f, Vec3 target) : finger_(&f), start_(f.position) {
    const Vec3 delta = target - start_;
    length_ = norm(delta);
    dir_ = length_ > 0.0 ? (1.0 / length_) * delta : Vec3{};
    finger_->contact = false;
    finger_->contact_normal.reset();
    finger_->compression = 0.0;
  }

  bool done() const { return done_; }
  const std::optional<ContactEvent>& event() const { return event_; }

  // Advances by up to one commanded increment of `step`.
  // `holders` are stationary fingertips already pressing on a body; a push
  // that would drive a body into one of them is blocked.
  void advance_increment(Scene& scene, double step, const SensorModel& sensor, bool floor_stops,
                         std::span<const Vec3> holders = {}) {
    if (done_) return;
    const double r = scene.physics().finger_radius;
    const double h = scene.physics().micro_step;
    const double increment_end = std::min(length_, traveled_ + step);
    bool drop_drawn = false;
    bool blind = false;
    while (traveled_ < increment_end - 1e-12) {
      double a = std::min(h, increment_end - traveled_);
      if (finger_->compression == 0.0) {
        const double free = scene.free_distance(finger_->position, r);
        if (free > h) a = std::min(free, increment_end - traveled_);
      }
      finger_->position += a * dir_;
      traveled_ += a;
      scene.advance_tick();

      if (floor_stops && finger_->position.z <= r) {
        finger_->position.z = r;
        finish_floor(scene);
        return;
      }

      const auto hit = scene.deepest_contact(finger_->position, r);
      if (!hit) {
        finger_->compression = 0.0;
        continue;
      }
      const auto idx = static_cast<std::size_t>(hit->body_index);
      const Vec2 nh{hit->normal.x, hit->normal.y};
      const double s = norm(nh);
      if (!scene.static_mode() && s > 1e-9) {
        const Vec2 push_dir = (-1.0 / s) * nh;
        const Vec2 surface_xy = finger_->position.xy() - r * nh;
        std::vector<Pose> before;
        std::vector<double> gap;
        for (const Vec3& c : holders) gap.push_back(scene.clearance(idx, c, r));
        if (!holders.empty())
          for (const BodyState& b : scene.bodies()) before.push_back(b.pose);
        scene.push(idx, surface_xy, hit->depth * s, push_dir);
        const double tol = scene.physics().surface_tol;
        bool blocked = false;
        for (std::size_t k = 0; k < holders.size() && !blocked; ++k)
          blocked = scene.clearance(idx, holders[k], r) < std::min(gap[k], -tol) - 1e-9;
        if (blocked)
          for (std::size_t j = 0; j < before.size(); ++j) scene.set_pose(j, before[j]);
      }
      // Resolve the fingertip onto the (possibly moved) surface.
      double residual = 0.0;
      Vec3 normal = hit->normal;
      const double sd = scene.clearance(idx, finger_->position, r);
      if (sd < 0.0) {
        residual = -sd;
        finger_->position += residual * normal;
      }
      finger_->compression += residual;
      if (finger_->compression >= sensor.threshold) {
        if (sensor.drop_probability > 0.0 && !drop_drawn) {
          drop_drawn = true;
          std::bernoulli_distribution miss(sensor.drop_probability);
          blind = miss(*sensor.rng);
        }
        if (!blind) {
          finish_contact(scene, hit->body_index, normal);
          return;
        }
      }
    }
    if (traveled_ >= length_ - 1e-12) done_ = true;
  }

 private:
  void finish_contact(Scene& scene, int body, Vec3 normal) {
    finger_->contact = true;
    finger_->contact_normal = normal;
    event_ = ContactEvent{finger_->id, finger_->position, body, normal, scene.tick()};
    done_ = true;
  }
  void finish_floor(Scene& scene) {
    finger_->contact = true;
    finger_->contact_normal = Vec3{0.0, 0.0, 1.0};
    event_ = ContactEvent{finger_->id, finger_->position, kFloor, Vec3{0.0, 0.0, 1.0}, scene.tick()};
    done_ = true;
  }

  Finger* finger_;
  Vec3 start_;
  Vec3 dir_;
  double length_ = 0.0;
  double traveled_ = 0.0;
  bool done_ = false;
  std::optional<ContactEvent> event_;
};

void check_step(double step) {
  if (!(step > 0.0 && step <= 0.5)) throw std::invalid_argument("finger step must be in (0, 0.5] cm");
}

void check_sensor(const SensorModel& sensor) {
  if (!(sensor.threshold > 0.0)) throw std::invalid_argument("sensor threshold must be positive");
  if (sensor.drop_probability > 0.0 && sensor.rng == nullptr)
    throw std::invalid_argument("sensor with drop probability needs an rng");
}

void check_target(const Scene& scene, Vec3 t) {
  if (!scene.inside_bin(t.xy()) || t.z < 0.0 || t.z > scene.physics().bin_height)
    throw std::invalid_argument("finger target outside the bin volume");
}

}  // namespace

ContactEvent probe_descend(Scene& scene, Vec2 xy, const ProbeOptions& opts) {
  if (!scene.inside_bin(xy)) throw std::invalid_argument("probe_descend: (x, y) outside the bin");
  const double r = scene.physics().finger_radius;
  Finger f{.id = 0, .position = Vec3{xy.x, xy.y, opts.z_start}};
  FingerMotion motion(f, Vec3{xy.x, xy.y, r - 1.0});
  const SensorModel sensor{scene.physics().contact_threshold};
  while (!motion.done()) motion.advance_increment(scene, opts.step, sensor, true);
  return *motion.event();
}

std::vector<ContactEvent> move_finger(Scene& scene, Finger& finger, Vec3 target, double step,
                                      const SensorModel& sensor) {
  check_step(step);
  check_sensor(sensor);
  check_target(scene, target);
  FingerMotion motion(finger, target);
  while (!motion.done()) motion.advance_increment(scene, step, sensor, false);
  if (motion.event()) return {*motion.event()};
  return {};
}

std::vector<ContactEvent> move_finger(Scene& scene, Finger& finger, Vec3 target, double step) {
  return move_finger(scene, finger, target, step, SensorModel{scene.physics().contact_threshold});
}

std::vector<std::optional<ContactEvent>> close_fingers(Scene& scene, std::vector<Finger>& fingers,
                                                       const std::vector<Vec3>& targets, double step,
                                                       const SensorModel& sensor, bool hold) {
  check_step(step);
  check_sensor(sensor);
  if (targets.size() != fingers.size()) throw std::invalid_argument("close_fingers: one target per finger");
  std::vector<FingerMotion> motions;
  motions.reserve(fingers.size());
  for (std::size_t i = 0; i < fingers.size(); ++i) {
    check_target(scene, targets[i]);
    motions.emplace_back(fingers[i], targets[i]);
  }
  bool any = true;
  std::vector<Vec3> holders;
  while (any) {
    any = false;
    for (auto& m : motions) {
      if (m.done()) continue;
      holders.clear();
      for (std::size_t j = 0; hold && j < motions.size(); ++j)
        if (motions[j].event() && !motions[j].event()->on_floor()) holders.push_back(fingers[j].position);
      m.advance_increment(scene, step, sensor, false, holders);
      any = any || !m.done();
    }
  }
  std::vector<std::optional<ContactEvent>> out;
  out.reserve(motions.size());
  for (const auto& m : motions) out.push_back(m.event());
  return out;
}

std::vector<Displacement> displacement_report(const Scene& scene) {
  std::vector<Displacement> out;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const BodyState& b = scene.body(i);
    const Vec2 c = b.shape.volume_centroid();
    out.push_back({i, distance(b.pose.to_world(c), b.initial_pose.to_world(c))});
  }
  return out;
}

double mean_displacement(const Scene& scene) {
  if (scene.size() == 0) return 0.0;
  double s = 0.0;
  for (const auto& d : displacement_report(scene)) s += d.distance;
  return s / static_cast<double>(scene.size());
}

}  // namespace touchfetch
