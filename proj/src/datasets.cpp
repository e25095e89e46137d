#include "touchfetch/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "touchfetch/rng.hpp"
#include "touchfetch/scene_io.hpp"

namespace touchfetch {
namespace {

constexpr double kPi = std::numbers::pi;

double pieces_diameter(const std::vector<ConvexPolygon>& pieces) {
  std::vector<Vec2> all;
  for (const auto& p : pieces) all.insert(all.end(), p.vertices().begin(), p.vertices().end());
  double d = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) d = std::max(d, distance(all[i], all[j]));
  return d;
}

ConvexPolygon diamond(double half_long, double half_short, double angle) {
  std::vector<Vec2> v{{half_long, 0.0}, {0.0, half_short}, {-half_long, 0.0}, {0.0, -half_short}};
  for (Vec2& p : v) p = rotate(p, angle);
  return ConvexPolygon(std::move(v));
}

ConvexPolygon ellipse(double a, double b, int segments) {
  std::vector<Vec2> v;
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * kPi * i / segments;
    v.push_back({a * std::cos(t), b * std::sin(t)});
  }
  return ConvexPolygon(std::move(v));
}

std::vector<ConvexPolygon> draw_footprint(ShapeFamily family, Rng& rng) {
  switch (family) {
    case ShapeFamily::PrismNgon: {
      const int n = std::uniform_int_distribution<int>(3, 8)(rng);
      const ConvexPolygon unit_poly = ConvexPolygon::regular(n, 1.0, {}, kPi / n);
      const double target = uniform(rng, 8.5, 15.5);
      return {unit_poly.scaled(target / pieces_diameter({unit_poly}))};
    }
    case ShapeFamily::Box: {
      const double w = uniform(rng, 5.0, 13.0);
      const double d = uniform(rng, 3.5, w);
      return {ConvexPolygon::rectangle({-w / 2, -d / 2}, {w / 2, d / 2})};
    }
    case ShapeFamily::EllipsePrism: {
      const double a = uniform(rng, 4.2, 7.8);
      const double b = uniform(rng, 2.5, 0.9 * a);
      return {ellipse(a, b, 24)};
    }
    case ShapeFamily::LShape: {
      const double l1 = uniform(rng, 7.0, 13.0), l2 = uniform(rng, 6.0, 12.0);
      const double t1 = uniform(rng, 2.5, 5.0), t2 = uniform(rng, 2.5, 5.0);
      return {ConvexPolygon::rectangle({0.0, 0.0}, {l1, t1}), ConvexPolygon::rectangle({0.0, t1}, {t2, l2})};
    }
    case ShapeFamily::TShape: {
      const double w = uniform(rng, 8.0, 14.0), tb = uniform(rng, 2.5, 4.5);
      const double s = uniform(rng, 4.0, 9.0), ts = uniform(rng, 2.5, 4.5);
      return {ConvexPolygon::rectangle({-w / 2, s}, {w / 2, s + tb}),
              ConvexPolygon::rectangle({-ts / 2, 0.0}, {ts / 2, s})};
    }
    case ShapeFamily::StarPrism: {
      const int m = std::uniform_int_distribution<int>(2, 4)(rng);
      const double half_long = uniform(rng, 4.5, 7.8), half_short = uniform(rng, 1.2, 2.2);
      const double phase = uniform(rng, 0.0, kPi);
      std::vector<ConvexPolygon> out;
      for (int k = 0; k < m; ++k) out.push_back(diamond(half_long, half_short, phase + k * kPi / m));
      return out;
    }
  }
  throw std::invalid_argument("unknown shape family");
}

ShapeSlice slice_of(const std::vector<ConvexPolygon>& pieces, double scale, double lo, double hi) {
  ShapeSlice s{lo, hi, {}};
  for (const auto& p : pieces) s.footprint.push_back(scale == 1.0 ? p : p.scaled(scale));
  return s;
}

std::vector<ConvexPolygon> world_pieces(const ObjectShape& shape, const Pose& pose) {
  std::vector<ConvexPolygon> out;
  for (const auto& s : shape.slices())
    for (const auto& p : s.footprint) out.push_back(p.transformed(pose.theta, pose.position()));
  return out;
}

}  // namespace

std::string_view family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::PrismNgon: return "prism_ngon";
    case ShapeFamily::Box: return "box";
    case ShapeFamily::EllipsePrism: return "ellipse_prism";
    case ShapeFamily::LShape: return "l_shape";
    case ShapeFamily::TShape: return "t_shape";
    case ShapeFamily::StarPrism: return "star_prism";
  }
  return "?";
}

ShapeFamily parse_family(std::string_view name) {
  for (int i = 0; i < kFamilyCount; ++i)
    if (family_name(static_cast<ShapeFamily>(i)) == name) return static_cast<ShapeFamily>(i);
  throw std::invalid_argument("unknown shape family: " + std::string(name));
}

ObjectShape make_prism_ngon(int n, double across_flats, double height) {
  const double circumradius = 0.5 * across_flats / std::cos(kPi / n);
  return ObjectShape({slice_of({ConvexPolygon::regular(n, circumradius, {}, kPi / n)}, 1.0, 0.0, height)},
                     "prism_ngon")
      .recentered();
}

ObjectShape make_cylinder(double radius, double height, int segments) {
  // Circumscribed polygon so the inscribed circle has exactly `radius`.
  const double circumradius = radius / std::cos(kPi / segments);
  return ObjectShape({slice_of({ConvexPolygon::regular(segments, circumradius, {}, kPi / segments)}, 1.0, 0.0,
                               height)},
                     "cylinder")
      .recentered();
}

ObjectShape make_box(double width, double depth, double height) {
  return ObjectShape(
      {slice_of({ConvexPolygon::rectangle({-width / 2, -depth / 2}, {width / 2, depth / 2})}, 1.0, 0.0, height)},
      "box");
}

ObjectShape gen_shape(ShapeFamily family, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(family)}));
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto pieces = draw_footprint(family, rng);
    const double diam = pieces_diameter(pieces);
    const int n_slices = std::uniform_int_distribution<int>(1, 3)(rng);
    const double total_height = uniform(rng, 4.0, 18.0);
    const bool tapered = n_slices > 1 && uniform(rng, 0.0, 1.0) < 0.6;
    const double taper = tapered ? uniform(rng, 0.15, 0.4) : 0.0;
    std::vector<double> weights;
    for (int k = 0; k < n_slices; ++k) weights.push_back(uniform(rng, 0.5, 1.5));
    if (diam < ObjectShape::kMinDiameter || diam > ObjectShape::kMaxDiameter) continue;

    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::vector<ShapeSlice> slices;
    double z = 0.0;
    for (int k = 0; k < n_slices; ++k) {
      const double hz = total_height * weights[k] / wsum;
      const double scale = n_slices > 1 ? 1.0 - taper * k / (n_slices - 1) : 1.0;
      const double z_hi = k + 1 == n_slices ? total_height : z + hz;
      slices.push_back(slice_of(pieces, scale, z, z_hi));
      z = z_hi;
    }
    const std::string label = std::string(family_name(family)) + "-" + std::to_string(seed);
    return ObjectShape(std::move(slices), label).recentered();
  }
  throw std::runtime_error("gen_shape: diameter bounds violated in 100 draws");
}

GeneratedScene place_shapes(const std::vector<ObjectShape>& shapes, std::uint64_t seed, const SceneOptions& opts) {
  Rng rng(seed);
  const double lo = opts.wall_clearance, hi = opts.bin_side - opts.wall_clearance;
  int attempts = 0;
  while (true) {
    std::vector<Pose> poses;
    std::vector<std::vector<ConvexPolygon>> placed;
    bool restart = false;
    for (const ObjectShape& shape : shapes) {
      int tries = 0;
      while (true) {
        if (++attempts > 10000) throw std::runtime_error("gen_scene: bin too crowded (10000 rejected placements)");
        if (++tries > 500) {
          restart = true;
          break;
        }
        const Pose pose{uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, -kPi, kPi)};
        auto pieces = world_pieces(shape, pose);
        bool ok = true;
        for (const auto& p : pieces)
          for (Vec2 v : p.vertices())
            if (v.x < lo || v.x > hi || v.y < lo || v.y > hi) ok = false;
        for (std::size_t j = 0; ok && j < placed.size(); ++j)
          for (const auto& a : pieces)
            for (const auto& b : placed[j])
              if (polygon_distance(a, b) < opts.min_sep) ok = false;
        if (!ok) continue;
        poses.push_back(pose);
        placed.push_back(std::move(pieces));
        break;
      }
      if (restart) break;
    }
    if (restart) continue;

    std::vector<BodyState> bodies;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      bodies.push_back(BodyState{shapes[i], poses[i], opts.mass, opts.friction, poses[i]});
    std::vector<std::size_t> idx(shapes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return GeneratedScene{Scene(opts.bin_side, std::move(bodies), opts.static_mode, opts.physics), std::move(idx)};
  }
}

GeneratedScene gen_scene(const std::vector<ObjectShape>& shapes, std::size_t k, std::uint64_t seed,
                         const SceneOptions& opts) {
  if (k > shapes.size()) throw std::invalid_argument("gen_scene: K exceeds the number of shapes");
  std::vector<std::size_t> order(shapes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, {1}));
  std::shuffle(order.begin(), order.end(), pick);
  order.resize(k);
  std::vector<ObjectShape> chosen;
  for (std::size_t i : order) chosen.push_back(shapes[i]);
  GeneratedScene g = place_shapes(chosen, derive_seed(seed, {2}), opts);
  g.shape_indices = std::move(order);
  return g;
}

ShapeFamily family_of_id(int id) { return static_cast<ShapeFamily>(id % kFamilyCount); }

SplitManifest SplitManifest::make(std::uint64_t seed, int n_train, int n_validation) {
  std::vector<int> ids(static_cast<std::size_t>(n_train + n_validation));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, {0x5b1177}));
  std::shuffle(ids.begin(), ids.end(), rng);
  SplitManifest m;
  m.generator_seed = seed;
  m.train_ids.assign(ids.begin(), ids.begin() + n_train);
  m.validation_ids.assign(ids.begin() + n_train, ids.end());
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.validation_ids.begin(), m.validation_ids.end());
  return m;
}

ObjectShape SplitManifest::shape(int id) const {
  return gen_shape(family_of_id(id), derive_seed(generator_seed, {static_cast<std::uint64_t>(id)}));
}

nlohmann::json SplitManifest::to_json() const {
  return {{"generator_seed", generator_seed}, {"train", train_ids}, {"validation", validation_ids}};
}

SplitManifest SplitManifest::from_json(const nlohmann::json& j) {
  SplitManifest m;
  m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
  m.train_ids = j.at("train").get<std::vector<int>>();
  m.validation_ids = j.at("validation").get<std::vector<int>>();
  for (int id : m.validation_ids)
    if (std::find(m.train_ids.begin(), m.train_ids.end(), id) != m.train_ids.end())
      throw std::invalid_argument("manifest: shape id in both train and validation");
  return m;
}

std::vector<TapSequence> collect_corpus(const SplitManifest& manifest, const std::vector<int>& ids,
                                        const CorpusOptions& opts, CorpusStats* stats) {
  if (opts.poses_per_object < 2) throw std::invalid_argument("corpus needs at least 2 poses per object");
  CorpusStats local;
  std::vector<TapSequence> out;
  for (int id : ids) {
    const ObjectShape shape = manifest.shape(id);
    for (int pose = 0; pose < opts.poses_per_object; ++pose) {
      bool done = false;
      for (int attempt = 0; attempt < 2 && !done; ++attempt) {
        const std::uint64_t s = derive_seed(opts.seed, {static_cast<std::uint64_t>(id),
                                                        static_cast<std::uint64_t>(pose),
                                                        static_cast<std::uint64_t>(attempt)});
        GeneratedScene g = place_shapes({shape}, s, opts.scene);
        Rng rng(derive_seed(s, {7}));
        const double rad = opts.center_noise * std::sqrt(uniform(rng, 0.0, 1.0));
        const double ang = uniform(rng, -kPi, kPi);
        const Vec2 est = g.scene.body(0).pose.position() + rad * Vec2{std::cos(ang), std::sin(ang)};
        TapSequence seq = collect_taps(g.scene, est, opts.tap, opts.variant, rng);
        if (seq.empty()) {
          if (attempt == 0) ++local.redrawn;
          continue;
        }
        seq.object_id = id;
        seq.pose_id = pose;
        out.push_back(std::move(seq));
        done = true;
      }
      if (!done) {
        ++local.skipped;
        std::cerr << "warning: shape " << id << " pose " << pose << " produced no contacts; skipped\n";
      }
    }
  }
  local.records = static_cast<int>(out.size());
  if (stats) *stats = local;
  return out;
}

CorpusStats build_corpus(const SplitManifest& manifest, const CorpusOptions& opts, const std::filesystem::path& dir) {
  for (int id : manifest.validation_ids)
    if (std::find(manifest.train_ids.begin(), manifest.train_ids.end(), id) != manifest.train_ids.end())
      throw std::invalid_argument("build_corpus: validation shape in training split");
  std::filesystem::create_directories(dir);
  CorpusStats a, b;
  write_jsonl(dir / "train.jsonl", collect_corpus(manifest, manifest.train_ids, opts, &a));
  write_jsonl(dir / "val.jsonl", collect_corpus(manifest, manifest.validation_ids, opts, &b));
  write_json_file(dir / "manifest.json", manifest.to_json());
  return CorpusStats{a.records + b.records, a.redrawn + b.redrawn, a.skipped + b.skipped};
}

void write_jsonl(const std::filesystem::path& path, const std::vector<TapSequence>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<TapSequence> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<TapSequence> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(tap_sequence_from_json(nlohmann::json::parse(line)));
  return out;
}

}  // namespace touchfetch
