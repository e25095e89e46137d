#pragma once

// Radial tapping around an estimated object centre, with exponential-smoothing
// relocalization, plus the three-finger caging grasp.

#include <span>
#include <vector>

#include "json.hpp"
#include "touchfetch/rng.hpp"
#include "touchfetch/world.hpp"

namespace touchfetch {

struct TapConfig {
  double start_radius = 12.0;  // R0
  double min_radius = 1.0;
  double inward_step = 0.2;
  double z_start = 1.0;
  double z_step = 1.0;
  double z_max = 20.0;
  double gamma = 0.9;
  int max_taps = 100;
  // Rotation of the finger triad between successive tap levels (radians).
  double twist_per_level = 0.0;
  // Sensor used by the `noisy` variant.
  double noisy_threshold = 0.5;
  double noisy_drop_probability = 0.2;

  void validate(double finger_radius) const;
};

enum class TapVariant { Full, NoReloc, Noisy };

struct TapSequence {
  std::vector<Vec3> points;  // relative to the initial centre estimate
  int object_id = -1;        // ground truth, evaluation only
  int pose_id = -1;
  int tap_count = 0;
  double displacement = 0.0;  // of the tapped body during the episode
  bool flagged_empty = false; // estimate was not near any body
  Vec2 final_center{};        // planar mean of the last tap's contacts, not serialized

  bool empty() const { return points.empty(); }
};

// c_new = gamma * c_old + (1 - gamma) * planar mean of contacts; returns c_old
// unchanged when there are no contacts.
Vec2 relocalize(Vec2 c_hat, std::span<const Vec3> contacts, double gamma);

// `rng` drives the sensor dropouts of the noisy variant only.
TapSequence collect_taps(Scene& scene, Vec2 center_estimate, const TapConfig& cfg, TapVariant variant,
                         Rng& rng);

struct GraspConfig {
  double start_radius = 12.0;
  double min_radius = 1.0;
  double step = 0.2;
  double grasp_threshold = 0.2;  // pad compression that counts as a firm touch
};

struct GraspResult {
  bool success = false;
  std::vector<ContactEvent> contacts;
  bool caged = false;
  int body_index = kFloor;
};

// Closes the three fingers about `center_estimate` at half the height of the
// body found there (probed first unless `height` is given).
GraspResult grasp(Scene& scene, Vec2 center_estimate, const GraspConfig& cfg = {},
                  std::optional<double> height = std::nullopt);

nlohmann::json to_json(const TapSequence& seq);
TapSequence tap_sequence_from_json(const nlohmann::json& j);

std::string_view variant_name(TapVariant v);
TapVariant parse_variant(std::string_view name);

}  // namespace touchfetch
