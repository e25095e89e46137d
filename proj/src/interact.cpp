#include "touchfetch/interact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace touchfetch {
namespace {

constexpr double kNeighborhood = 7.5;  // cm, how far an estimate may be from a body

Vec2 clamp_to_bin(const Scene& scene, Vec2 p) {
  const double lo = 0.0, hi = scene.bin_side();
  return {std::clamp(p.x, lo, hi), std::clamp(p.y, lo, hi)};
}

Vec2 centroid_of(const BodyState& b) { return b.pose.to_world(b.shape.volume_centroid()); }

std::optional<std::size_t> nearest_body(const Scene& scene, Vec2 p, double within) {
  std::optional<std::size_t> best;
  double best_d = within;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double d = distance(centroid_of(scene.body(i)), p);
    if (d <= best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace

void TapConfig::validate(double finger_radius) const {
  if (!(start_radius > min_radius && min_radius >= finger_radius))
    throw std::invalid_argument("TapConfig: need start_radius > min_radius >= finger_radius");
  if (!(z_step > 0.0)) throw std::invalid_argument("TapConfig: z_step must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0 + 1e-12)) throw std::invalid_argument("TapConfig: gamma outside [0, 1]");
  if (max_taps < 1) throw std::invalid_argument("TapConfig: max_taps must be >= 1");
}

Vec2 relocalize(Vec2 c_hat, std::span<const Vec3> contacts, double gamma) {
  if (contacts.empty()) return c_hat;
  Vec2 mean;
  for (const Vec3& p : contacts) mean += p.xy();
  mean = (1.0 / static_cast<double>(contacts.size())) * mean;
  return gamma * c_hat + (1.0 - gamma) * mean;
}

TapSequence collect_taps(Scene& scene, Vec2 center_estimate, const TapConfig& cfg, TapVariant variant,
                         Rng& rng) {
  const double r = scene.physics().finger_radius;
  cfg.validate(r);
  TapSequence seq;
  seq.final_center = center_estimate;
  const auto target = nearest_body(scene, center_estimate, kNeighborhood);
  if (!target) {
    seq.flagged_empty = true;
    return seq;
  }
  const Vec2 start_centroid = centroid_of(scene.body(*target));

  SensorModel sensor{scene.physics().contact_threshold};
  if (variant == TapVariant::Noisy) {
    sensor.threshold = cfg.noisy_threshold;
    sensor.drop_probability = cfg.noisy_drop_probability;
    sensor.rng = &rng;
  }

  Vec2 c_hat = clamp_to_bin(scene, center_estimate);
  std::vector<Vec3> last_contacts;
  for (int level = 0; seq.tap_count < cfg.max_taps; ++level) {
    const double z = cfg.z_start + level * cfg.z_step;
    if (z > cfg.z_max + 1e-9) break;

    std::vector<Finger> fingers;
    std::vector<Vec3> targets;
    for (int i = 0; i < 3; ++i) {
      const Vec2 u = unit(2.0 * std::numbers::pi * i / 3.0 + level * cfg.twist_per_level);
      const Vec2 start = clamp_to_bin(scene, c_hat + cfg.start_radius * u);
      const Vec3 start3{start.x, start.y, z};
      // A finger whose start position is already inside a body is blocked.
      if (scene.deepest_contact(start3, r)) continue;
      fingers.push_back(Finger{.id = i, .position = start3});
      const Vec2 end = clamp_to_bin(scene, c_hat + cfg.min_radius * u);
      targets.push_back({end.x, end.y, z});
    }
    const auto events = close_fingers(scene, fingers, targets, cfg.inward_step, sensor);

    std::vector<Vec3> contacts;
    for (const auto& e : events)
      if (e && !e->on_floor()) contacts.push_back(e->point);
    if (contacts.empty()) break;

    ++seq.tap_count;
    for (const Vec3& p : contacts) seq.points.push_back({p.x - center_estimate.x, p.y - center_estimate.y, p.z});
    if (variant != TapVariant::NoReloc) c_hat = clamp_to_bin(scene, relocalize(c_hat, contacts, cfg.gamma));
    last_contacts = std::move(contacts);
  }
  seq.displacement = distance(centroid_of(scene.body(*target)), start_centroid);
  seq.final_center = clamp_to_bin(scene, relocalize(c_hat, last_contacts, 0.0));
  return seq;
}

GraspResult grasp(Scene& scene, Vec2 center_estimate, const GraspConfig& cfg, std::optional<double> height) {
  GraspResult out;
  const double r = scene.physics().finger_radius;
  const Vec2 c = clamp_to_bin(scene, center_estimate);
  if (!height) {
    // Probe the estimate, then a small ring around it for footprints whose
    // centroid lies outside the material (L and T shapes).
    std::vector<Vec2> spots{c};
    for (int k = 0; k < 8; ++k) spots.push_back(clamp_to_bin(scene, c + 3.0 * unit(k * std::numbers::pi / 4.0)));
    for (Vec2 s : spots) {
      const ContactEvent e = probe_descend(scene, s);
      if (!e.on_floor()) {
        height = e.point.z - r;
        break;
      }
    }
    if (!height) return out;
  }
  const double z = std::max(r, 0.5 * *height);

  std::vector<Finger> fingers;
  std::vector<Vec3> targets;
  for (int i = 0; i < 3; ++i) {
    const Vec2 u = unit(2.0 * std::numbers::pi * i / 3.0);
    const Vec2 start = clamp_to_bin(scene, c + cfg.start_radius * u);
    const Vec2 end = clamp_to_bin(scene, c + cfg.min_radius * u);
    fingers.push_back(Finger{.id = i, .position = {start.x, start.y, z}});
    targets.push_back({end.x, end.y, z});
  }
  const SensorModel firm{cfg.grasp_threshold};
  const auto events = close_fingers(scene, fingers, targets, cfg.step, firm, true);

  int body = kFloor;
  bool same = true;
  for (const auto& e : events) {
    if (!e || e->on_floor()) {
      same = false;
      continue;
    }
    out.contacts.push_back(*e);
    if (body == kFloor) body = e->body_index;
    else if (body != e->body_index) same = false;
  }
  if (same && out.contacts.size() == 3) {
    const BodyState& b = scene.body(static_cast<std::size_t>(body));
    out.caged = strictly_inside_triangle(centroid_of(b), fingers[0].position.xy(), fingers[1].position.xy(),
                                         fingers[2].position.xy());
    out.body_index = body;
  }
  out.success = out.caged;
  return out;
}

nlohmann::json to_json(const TapSequence& seq) {
  nlohmann::json pts = nlohmann::json::array();
  for (const Vec3& p : seq.points) pts.push_back({p.x, p.y, p.z});
  return {{"object_id", seq.object_id},
          {"pose_id", seq.pose_id},
          {"tap_count", seq.tap_count},
          {"points", std::move(pts)},
          {"displacement", seq.displacement}};
}

TapSequence tap_sequence_from_json(const nlohmann::json& j) {
  TapSequence seq;
  seq.object_id = j.value("object_id", -1);
  seq.pose_id = j.value("pose_id", -1);
  seq.tap_count = j.value("tap_count", 0);
  seq.displacement = j.value("displacement", 0.0);
  for (const auto& p : j.at("points"))
    seq.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  return seq;
}

std::string_view variant_name(TapVariant v) {
  switch (v) {
    case TapVariant::Full: return "full";
    case TapVariant::NoReloc: return "no_reloc";
    case TapVariant::Noisy: return "noisy";
  }
  return "full";
}

TapVariant parse_variant(std::string_view name) {
  if (name == "full") return TapVariant::Full;
  if (name == "no_reloc") return TapVariant::NoReloc;
  if (name == "noisy") return TapVariant::Noisy;
  throw std::invalid_argument("unknown tap variant: " + std::string(name));
}

}  // namespace touchfetch
