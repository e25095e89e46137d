#pragma once

#include <cmath>
#include <vector>

#include "touchfetch/datasets.hpp"
#include "touchfetch/world.hpp"

namespace tf_test {

using namespace touchfetch;

inline BodyState body(const ObjectShape& shape, Pose pose, double mass = 0.2, double friction = 0.5) {
  return BodyState{.shape = shape, .pose = pose, .mass = mass, .friction = friction, .initial_pose = pose};
}

inline Scene one_body(const ObjectShape& shape, Pose pose, bool static_mode, double mass = 0.2,
                      double friction = 0.5) {
  return Scene(60.0, {body(shape, pose, mass, friction)}, static_mode);
}

inline double pose_gap(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace tf_test
