#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "touchfetch/interact.hpp"

using namespace touchfetch;

namespace {

Vec2 centroid_now(const Scene& s, std::size_t i) {
  return s.body(i).pose.to_world(s.body(i).shape.volume_centroid());
}

struct Episode {
  std::size_t points = 0;
  double displacement = 0.0;
};

// Body tapped from a centre estimate off by up to 3 cm.
Episode tap_episode(std::uint64_t seed, TapVariant v, double mass = 0.1, double mu = 0.1,
                    double kappa = PhysicsParams{}.kappa) {
  Rng rng(seed);
  const Vec2 c{uniform(rng, 20, 40), uniform(rng, 20, 40)};
  const Vec2 off{uniform(rng, -3, 3), uniform(rng, -3, 3)};
  const ObjectShape shape = gen_shape(static_cast<ShapeFamily>(seed % kFamilyCount), seed);
  Scene s = tf_test::one_body(shape, {c.x, c.y, uniform(rng, -3, 3)}, false, mass, mu);
  s.physics().kappa = kappa;
  Rng tap_rng(seed + 1);
  const TapSequence seq = collect_taps(s, centroid_now(s, 0) + off, TapConfig{}, v, tap_rng);
  return {seq.points.size(), seq.displacement};
}

}  // namespace

TEST_SUITE("interact") {
  TEST_CASE("relocalize") {
    const std::vector<Vec3> pts{{10, 1, 3}, {10, -1, 5}};
    const Vec2 a = relocalize({0, 0}, pts, 0.9);
    CHECK(a.x == doctest::Approx(1.0));
    CHECK(a.y == doctest::Approx(0.0));
    CHECK(relocalize({3, 4}, pts, 1.0) == Vec2{3, 4});
    const Vec2 b = relocalize({3, 4}, pts, 0.0);
    CHECK(b.x == doctest::Approx(10.0));
    CHECK(b.y == doctest::Approx(0.0));
    CHECK(relocalize({3, 4}, {}, 0.5) == Vec2{3, 4});
    for (double g : {0.1, 0.5, 0.9}) {
      const Vec2 c{-7, 12};
      const Vec2 n = relocalize(c, pts, g);
      CHECK(distance(n, {10, 0}) == doctest::Approx(g * distance(c, {10, 0})));
    }
  }

  TEST_CASE("tap config validation") {
    TapConfig c;
    CHECK_NOTHROW(c.validate(1.0));
    c.min_radius = 0.5;
    CHECK_THROWS_AS(c.validate(1.0), std::invalid_argument);
    c = TapConfig{};
    c.start_radius = 1.0;
    CHECK_THROWS_AS(c.validate(1.0), std::invalid_argument);
    c = TapConfig{};
    c.z_step = 0.0;
    CHECK_THROWS_AS(c.validate(1.0), std::invalid_argument);
  }

  TEST_CASE("static cylinder contacts lie on the offset circle") {
    Scene s = tf_test::one_body(make_cylinder(5, 10), {30, 30, 0}, true);
    Rng rng(0);
    const TapSequence seq = collect_taps(s, {30, 30}, TapConfig{}, TapVariant::Full, rng);
    REQUIRE(!seq.empty());
    CHECK(seq.displacement == 0.0);
    CHECK(seq.points.size() <= 3u * static_cast<std::size_t>(seq.tap_count));
    for (const Vec3& p : seq.points) {
      CHECK(std::hypot(p.x, p.y) == doctest::Approx(6.0).epsilon(0.05 / 6.0 + 0.012 / 6.0));
      CHECK(p.z <= 10.0 + 1e-9);
    }
    // A 10 cm tall body at 1 cm level spacing: levels 1..10 touch, level 11 is clear.
    CHECK(seq.tap_count == 10);
    CHECK(seq.points.size() == 30u);
  }

  TEST_CASE("static taps sit on the surface of arbitrary shapes") {
    for (int f = 0; f < kFamilyCount; ++f) {
      const ObjectShape shape = gen_shape(static_cast<ShapeFamily>(f), 100 + f);
      Scene s = tf_test::one_body(shape, {30, 30, 0.7 * f}, true);
      Rng rng(f);
      const TapSequence seq = collect_taps(s, centroid_now(s, 0) + Vec2{1.0, -1.5}, TapConfig{}, TapVariant::Full, rng);
      CHECK(seq.displacement == 0.0);
      CHECK(seq.points.size() <= 3u * static_cast<std::size_t>(seq.tap_count));
      const Vec2 c0{centroid_now(s, 0).x + 1.0, centroid_now(s, 0).y - 1.5};
      for (const Vec3& p : seq.points) {
        const Vec3 world{p.x + c0.x, p.y + c0.y, p.z};
        CHECK(std::abs(s.clearance(0, world, s.physics().finger_radius)) <= s.physics().surface_tol + 1e-9);
      }
    }
  }

  TEST_CASE("empty region gives an empty flagged sequence") {
    Scene s = tf_test::one_body(make_box(10, 10, 10), {45, 45, 0}, false);
    Rng rng(0);
    const TapSequence seq = collect_taps(s, {10, 10}, TapConfig{}, TapVariant::Full, rng);
    CHECK(seq.empty());
    CHECK(seq.flagged_empty);
    CHECK(seq.displacement == 0.0);
  }

  TEST_CASE("relocalization helps on slippery bodies") {
    double full_pts = 0, norel_pts = 0, full_disp = 0, norel_disp = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      full_pts += tap_episode(seed, TapVariant::Full).points;
      norel_pts += tap_episode(seed, TapVariant::NoReloc).points;
      // Displacement is compared with the stiff contact (kappa 10) at m 0.2, mu 0.5.
      full_disp += tap_episode(seed, TapVariant::Full, 0.2, 0.5, 10.0).displacement;
      norel_disp += tap_episode(seed, TapVariant::NoReloc, 0.2, 0.5, 10.0).displacement;
    }
    MESSAGE("points full " << full_pts << " no_reloc " << norel_pts << "; displacement full " << full_disp
                           << " no_reloc " << norel_disp);
    CHECK(full_pts > norel_pts);
    CHECK(full_disp <= norel_disp);
  }

  TEST_CASE("noisy sensing never adds points beyond the bound") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      Scene s = tf_test::one_body(gen_shape(ShapeFamily::Box, seed), {30, 30, 0.3}, false);
      const TapSequence seq = collect_taps(s, centroid_now(s, 0), TapConfig{}, TapVariant::Noisy, rng);
      CHECK(seq.points.size() <= 3u * static_cast<std::size_t>(seq.tap_count));
    }
  }

  TEST_CASE("grasp a centred cylinder") {
    Scene s = tf_test::one_body(make_cylinder(5, 10), {30, 30, 0}, true);
    const GraspResult g = grasp(s, {30, 30});
    CHECK(g.success);
    CHECK(g.caged);
    CHECK(g.body_index == 0);
    CHECK(g.contacts.size() == 3);
  }

  TEST_CASE("grasp far off a body fails") {
    Scene s = tf_test::one_body(make_box(10, 10, 10), {30, 30, 0}, true);
    const GraspResult g = grasp(s, {40, 30});
    CHECK_FALSE(g.success);
    int on_body = 0;
    for (const auto& c : g.contacts) on_body += c.body_index == 0;
    const bool cage_broken = on_body < 3 || !strictly_inside_triangle({30, 30}, g.contacts[0].point.xy(),
                                                                     g.contacts[1].point.xy(),
                                                                     g.contacts[2].point.xy());
    CHECK(cage_broken);
  }

  TEST_CASE("grasp at an empty location") {
    Scene s = tf_test::one_body(make_box(10, 10, 10), {45, 45, 0}, true);
    const GraspResult g = grasp(s, {10, 10});
    CHECK_FALSE(g.caged);
    CHECK_FALSE(g.success);
  }

  TEST_CASE("exact grasps of static convex bodies always succeed") {
    int tried = 0;
    for (int n = 3; n <= 8; ++n)
      for (double size : {8.0, 10.0, 12.0, 14.0}) {
        // Circumscribed diameter must stay within the shape bounds.
        const double diam = size / std::cos(std::numbers::pi / n);
        if (diam < 8.0 || diam > 16.0) continue;
        const ObjectShape shape = make_prism_ngon(n, size, 9.0);
        for (double th : {0.0, 0.4, 1.1}) {
          Scene s = tf_test::one_body(shape.recentered(), {31, 29, th}, true);
          CHECK(grasp(s, centroid_now(s, 0)).success);
          ++tried;
        }
      }
    for (double w : {8.0, 10.0, 13.0}) {
      Scene s = tf_test::one_body(make_box(w, 6.0, 9.0), {30, 30, 0.3}, true);
      CHECK(grasp(s, {30, 30}).success);
      ++tried;
    }
    CHECK(tried > 40);
  }

  TEST_CASE("grasp success implies a full cage on one body") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      Scene s = tf_test::one_body(gen_shape(static_cast<ShapeFamily>(seed % kFamilyCount), seed), {30, 30, 0.2},
                                  false);
      const GraspResult g = grasp(s, centroid_now(s, 0) + Vec2{uniform(rng, -4, 4), uniform(rng, -4, 4)});
      if (g.success) {
        CHECK(g.caged);
        REQUIRE(g.contacts.size() == 3);
        for (const auto& c : g.contacts) CHECK(c.body_index == g.body_index);
      }
    }
  }

  TEST_CASE("tap sequence JSON round trip") {
    TapSequence t;
    t.points = {{1.25, -2.5, 3.0}, {0.1, 0.2, 4.0}};
    t.object_id = 17;
    t.pose_id = 3;
    t.tap_count = 2;
    t.displacement = 0.125;
    const nlohmann::json j = to_json(t);
    for (const char* key : {"object_id", "pose_id", "points", "displacement"}) CHECK(j.contains(key));
    const TapSequence b = tap_sequence_from_json(j);
    CHECK(b.points == t.points);
    CHECK(b.object_id == 17);
    CHECK(b.pose_id == 3);
    CHECK(b.tap_count == 2);
    CHECK(b.displacement == 0.125);
  }

  TEST_CASE("variant names") {
    for (TapVariant v : {TapVariant::Full, TapVariant::NoReloc, TapVariant::Noisy})
      CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS(parse_variant("bogus"));
  }
}
