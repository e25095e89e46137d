#include "touchfetch/scene_io.hpp"

#include <fstream>
#include <stdexcept>

namespace touchfetch {
namespace {

Json pose_json(const Pose& p) { return Json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }
Pose pose_from(const Json& j) { return Pose{j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()}; }

}  // namespace

Json to_json(const ObjectShape& shape) {
  Json slices = Json::array();
  for (const auto& s : shape.slices()) {
    Json pieces = Json::array();
    for (const auto& p : s.footprint) {
      Json verts = Json::array();
      for (Vec2 v : p.vertices()) verts.push_back({v.x, v.y});
      pieces.push_back(std::move(verts));
    }
    slices.push_back({{"z_lo", s.z_lo}, {"z_hi", s.z_hi}, {"footprint", std::move(pieces)}});
  }
  return Json{{"label", shape.label()}, {"slices", std::move(slices)}};
}

ObjectShape shape_from_json(const Json& j) {
  std::vector<ShapeSlice> slices;
  for (const auto& js : j.at("slices")) {
    ShapeSlice s;
    s.z_lo = js.at("z_lo").get<double>();
    s.z_hi = js.at("z_hi").get<double>();
    for (const auto& jp : js.at("footprint")) {
      std::vector<Vec2> verts;
      for (const auto& jv : jp) verts.push_back({jv.at(0).get<double>(), jv.at(1).get<double>()});
      s.footprint.emplace_back(std::move(verts));
    }
    slices.push_back(std::move(s));
  }
  return ObjectShape(std::move(slices), j.value("label", std::string{}));
}

Json to_json(const Scene& scene) {
  Json bodies = Json::array();
  for (const auto& b : scene.bodies()) {
    bodies.push_back({{"shape", to_json(b.shape)},
                      {"pose", pose_json(b.pose)},
                      {"initial_pose", pose_json(b.initial_pose)},
                      {"mass", b.mass},
                      {"friction", b.friction}});
  }
  return Json{{"bin_side", scene.bin_side()},
              {"static_mode", scene.static_mode()},
              {"physics", to_json(scene.physics())},
              {"bodies", std::move(bodies)}};
}

Json to_json(const PhysicsParams& ph) {
  return {{"kappa", ph.kappa},
          {"finger_radius", ph.finger_radius},
          {"contact_threshold", ph.contact_threshold},
          {"micro_step", ph.micro_step},
          {"surface_tol", ph.surface_tol},
          {"bin_height", ph.bin_height}};
}

PhysicsParams physics_from_json(const Json& jp, PhysicsParams ph) {
  ph.kappa = jp.value("kappa", ph.kappa);
  ph.finger_radius = jp.value("finger_radius", ph.finger_radius);
  ph.contact_threshold = jp.value("contact_threshold", ph.contact_threshold);
  ph.micro_step = jp.value("micro_step", ph.micro_step);
  ph.surface_tol = jp.value("surface_tol", ph.surface_tol);
  ph.bin_height = jp.value("bin_height", ph.bin_height);
  return ph;
}

Scene scene_from_json(const Json& j) {
  std::vector<BodyState> bodies;
  for (const auto& jb : j.at("bodies")) {
    const Pose pose = pose_from(jb.at("pose"));
    const Pose initial = jb.contains("initial_pose") ? pose_from(jb.at("initial_pose")) : pose;
    bodies.push_back(BodyState{shape_from_json(jb.at("shape")), pose, jb.value("mass", 0.2),
                               jb.value("friction", 0.5), initial});
  }
  const PhysicsParams ph = j.contains("physics") ? physics_from_json(j.at("physics")) : PhysicsParams{};
  return Scene(j.at("bin_side").get<double>(), std::move(bodies), j.value("static_mode", false), ph);
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(in);
}

}  // namespace touchfetch
