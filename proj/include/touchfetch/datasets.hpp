#pragma once

// Procedural object families, scene placement and tap-sequence corpora.
// Everything here is a pure function of its seeds.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "touchfetch/interact.hpp"
#include "touchfetch/shape.hpp"
#include "touchfetch/world.hpp"

namespace touchfetch {

enum class ShapeFamily { PrismNgon, Box, EllipsePrism, LShape, TShape, StarPrism };
inline constexpr int kFamilyCount = 6;

std::string_view family_name(ShapeFamily f);
ShapeFamily parse_family(std::string_view name);

// Regular n-gon prism; `across_flats` is twice the apothem (a square of side
// 10 has across_flats 10).
ObjectShape make_prism_ngon(int n, double across_flats, double height);
ObjectShape make_cylinder(double radius, double height, int segments = 48);
ObjectShape make_box(double width, double depth, double height);

// Deterministic shape for (family, seed); 1-3 slices with optional taper.
// Throws std::runtime_error when 100 draws in a row violate the diameter bounds.
ObjectShape gen_shape(ShapeFamily family, std::uint64_t seed);

struct SceneOptions {
  double bin_side = 60.0;
  double min_sep = 4.0;        // footprint separation between bodies
  double wall_clearance = 2.0;
  double mass = 0.2;
  double friction = 0.5;
  bool static_mode = false;
  PhysicsParams physics;
};

struct GeneratedScene {
  Scene scene;
  std::vector<std::size_t> shape_indices;  // which input shape each body is
};

// Places every shape at a random pose (rejection sampling, 10k attempts).
GeneratedScene place_shapes(const std::vector<ObjectShape>& shapes, std::uint64_t seed,
                            const SceneOptions& opts = {});
// Picks K of the shapes at random, then places them.
GeneratedScene gen_scene(const std::vector<ObjectShape>& shapes, std::size_t k, std::uint64_t seed,
                         const SceneOptions& opts = {});

struct SplitManifest {
  std::uint64_t generator_seed = 0;
  std::vector<int> train_ids;
  std::vector<int> validation_ids;

  static SplitManifest make(std::uint64_t seed, int n_train = 120, int n_validation = 30);
  ObjectShape shape(int id) const;
  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

ShapeFamily family_of_id(int id);

struct CorpusOptions {
  int poses_per_object = 8;
  TapConfig tap;
  TapVariant variant = TapVariant::Full;
  SceneOptions scene;
  // The tapping starts from the true centre displaced uniformly within this
  // radius, emulating localization error.
  double center_noise = 3.0;
  std::uint64_t seed = 0;
};

struct CorpusStats {
  int records = 0;
  int redrawn = 0;
  int skipped = 0;
};

// Tap sequences for the given shape ids, ordered by (id, pose).
std::vector<TapSequence> collect_corpus(const SplitManifest& manifest, const std::vector<int>& ids,
                                        const CorpusOptions& opts, CorpusStats* stats = nullptr);

// Writes train.jsonl and val.jsonl (newline-delimited TapSequence records)
// plus manifest.json under `dir`.
CorpusStats build_corpus(const SplitManifest& manifest, const CorpusOptions& opts,
                         const std::filesystem::path& dir);

void write_jsonl(const std::filesystem::path& path, const std::vector<TapSequence>& records);
std::vector<TapSequence> read_jsonl(const std::filesystem::path& path);

}  // namespace touchfetch
