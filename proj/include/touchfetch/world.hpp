#pragma once

// Planar quasi-static simulation of rigid objects in a square bin, probed by
// spherical fingertips that report binary contact.
//
// Contact model. A fingertip moves in micro-steps. Whenever it overlaps a
// body by depth d along normal n, the body yields by push_response (a
// translation of beta*d along the horizontal part of -n, plus a small
// rotation) and the fingertip is resolved back onto the moved surface. The
// part of d the body did not absorb compresses the fingertip pad; contact is
// reported once the accumulated compression of the current touch reaches the
// sensor threshold. With beta = 1/(1 + kappa*mu*m) the body therefore moves
// threshold * beta/(1-beta) before a touch registers, independent of the
// commanded step size.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "touchfetch/geometry.hpp"
#include "touchfetch/shape.hpp"

namespace touchfetch {

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // [-pi, pi)

  Vec2 position() const { return {x, y}; }
  Vec2 to_world(Vec2 local) const { return rotate(local, theta) + position(); }
  Vec2 to_local(Vec2 world) const { return rotate(world - position(), -theta); }
};

struct BodyState {
  ObjectShape shape;
  Pose pose;
  double mass = 0.2;      // kg
  double friction = 0.5;  // Coulomb coefficient
  Pose initial_pose;
};

struct PhysicsParams {
  double kappa = 3.0;              // kg^-1, push compliance scale
  double finger_radius = 1.0;      // cm
  double contact_threshold = 0.05; // cm of pad compression
  double micro_step = 0.01;        // cm, integration resolution while pressing
  double surface_tol = 0.05;       // cm
  double bin_height = 30.0;        // cm, top of the reachable volume
};

inline constexpr int kFloor = -1;

struct ContactEvent {
  int finger_id = 0;
  Vec3 point;        // fingertip centre at detection
  int body_index = kFloor;
  Vec3 normal;       // unit, from the contacted surface toward the fingertip
  std::uint64_t tick = 0;

  bool on_floor() const { return body_index == kFloor; }
};

struct Finger {
  int id = 0;
  Vec3 position;
  bool contact = false;
  std::optional<Vec3> contact_normal = std::nullopt;
  double compression = 0.0;  // pad compression of the current touch
};

// How the fingertip sensor turns compression into a binary reading.
struct SensorModel {
  double threshold = 0.05;
  // Probability that a detection is missed during one commanded increment.
  double drop_probability = 0.0;
  std::mt19937_64* rng = nullptr;  // required when drop_probability > 0
};

// Result of a sphere-vs-body query.
struct BodyContact {
  int body_index = kFloor;
  double depth = 0.0;  // > 0 overlap
  Vec3 normal;         // unit, from the body toward the sphere centre
};

class Scene {
 public:
  Scene(double bin_side, std::vector<BodyState> bodies, bool static_mode, PhysicsParams physics = {});

  double bin_side() const { return bin_side_; }
  bool static_mode() const { return static_mode_; }
  void set_static_mode(bool s) { static_mode_ = s; }
  const PhysicsParams& physics() const { return physics_; }
  PhysicsParams& physics() { return physics_; }
  const std::vector<BodyState>& bodies() const { return bodies_; }
  const BodyState& body(std::size_t i) const { return bodies_.at(i); }
  std::size_t size() const { return bodies_.size(); }
  std::uint64_t tick() const { return tick_; }
  std::uint64_t advance_tick() { return ++tick_; }

  // World-frame footprint pieces of body i at its current pose, all slices.
  std::vector<ConvexPolygon> world_footprint(std::size_t i) const;
  // Smallest planar gap between two bodies' footprints (0 when touching).
  double footprint_gap(std::size_t i, std::size_t j) const;
  // Signed clearance from a sphere surface to body i (negative = overlap).
  double clearance(std::size_t i, Vec3 center, double radius) const;
  // Deepest overlap of a sphere with any body, nullopt when free.
  std::optional<BodyContact> deepest_contact(Vec3 center, double radius) const;
  // Lower bound on the free distance from a sphere to every body.
  double free_distance(Vec3 center, double radius) const;
  double beta(std::size_t i) const;
  bool inside_bin(Vec2 p) const;

  // Applies push_response to body i, keeps it in the bin and resolves any
  // overlap with other bodies. Returns the body's actual translation.
  Vec2 push(std::size_t i, Vec2 contact_point, double depth, Vec2 direction);

  void set_pose(std::size_t i, Pose p);

 private:
  void clamp_into_bin(std::size_t i);
  void resolve_body_overlaps(std::size_t moved);

  double bin_side_;
  std::vector<BodyState> bodies_;
  bool static_mode_;
  PhysicsParams physics_;
  std::uint64_t tick_ = 0;
};

// Quasi-static response of a body to a push of depth d along unit n:
// translation beta*d*n, rotation beta*d*cross(r, n)/(|r|^2 + rho^2).
Pose push_response(const BodyState& body, Vec2 contact_point, double depth, Vec2 direction, double kappa);
double push_beta(double mass, double friction, double kappa);

struct ProbeOptions {
  double z_start = 25.0;
  double step = 0.2;
};

// Lowers a fingertip at (x, y) until the sensor fires or it reaches the floor.
ContactEvent probe_descend(Scene& scene, Vec2 xy, const ProbeOptions& opts = {});

// Moves a fingertip in straight increments toward `target`; stops at the first
// detected contact. Returns the events (empty when the target was reached).
std::vector<ContactEvent> move_finger(Scene& scene, Finger& finger, Vec3 target, double step,
                                      const SensorModel& sensor);
std::vector<ContactEvent> move_finger(Scene& scene, Finger& finger, Vec3 target, double step);

// Closes several fingers simultaneously (round-robin increments), each toward
// its own target. Returns the detection per finger (nullopt when none).
// With `hold`, fingers that have stopped on a body keep pressing and block it.
std::vector<std::optional<ContactEvent>> close_fingers(Scene& scene, std::vector<Finger>& fingers,
                                                       const std::vector<Vec3>& targets, double step,
                                                       const SensorModel& sensor, bool hold = false);

struct Displacement {
  std::size_t body_index;
  double distance;
};
std::vector<Displacement> displacement_report(const Scene& scene);
double mean_displacement(const Scene& scene);

}  // namespace touchfetch
