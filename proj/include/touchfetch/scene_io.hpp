#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "touchfetch/world.hpp"

namespace touchfetch {

using Json = nlohmann::json;

Json to_json(const ObjectShape& shape);
ObjectShape shape_from_json(const Json& j);

// {bin_side, static_mode, physics, bodies: [{shape, pose, initial_pose, mass, friction}]}
Json to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

Json to_json(const PhysicsParams& physics);
// Keys missing from `j` keep their value in `base`.
PhysicsParams physics_from_json(const Json& j, PhysicsParams base = {});

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace touchfetch
