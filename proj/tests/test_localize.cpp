#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "touchfetch/localize.hpp"

using namespace touchfetch;

namespace {

// Exhaustive k-means optimum: every assignment of points to labels.
double best_partition_cost(const std::vector<Vec2>& pts, int k, std::vector<Vec2>* centers) {
  const std::size_t n = pts.size();
  std::vector<int> lab(n, 0);
  double best = 1e300;
  while (true) {
    std::vector<Vec2> sum(k);
    std::vector<int> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[lab[i]] += pts[i];
      ++cnt[lab[i]];
    }
    if (std::all_of(cnt.begin(), cnt.end(), [](int c) { return c > 0; })) {
      double cost = 0;
      std::vector<Vec2> c(k);
      for (int j = 0; j < k; ++j) c[j] = (1.0 / cnt[j]) * sum[j];
      for (std::size_t i = 0; i < n; ++i) cost += dot(pts[i] - c[lab[i]], pts[i] - c[lab[i]]);
      if (cost < best) {
        best = cost;
        *centers = c;
      }
    }
    std::size_t i = 0;
    while (i < n && ++lab[i] == k) lab[i++] = 0;
    if (i == n) break;
  }
  return best;
}

// Cells whose centre lies in the finger-inflated footprint of an axis-aligned
// box centred at c with half-sides hx, hy.
std::vector<std::pair<int, int>> inflated_box_cells(Vec2 c, double hx, double hy, double r, double delta, int n) {
  std::vector<std::pair<int, int>> out;
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const Vec2 p{(col + 0.5) * delta, (row + 0.5) * delta};
      const double dx = std::max(std::abs(p.x - c.x) - hx, 0.0), dy = std::max(std::abs(p.y - c.y) - hy, 0.0);
      if (std::hypot(dx, dy) < r) out.push_back({col, row});
    }
  return out;
}

}  // namespace

TEST_SUITE("localize") {
  TEST_CASE("grid dimensions and exports") {
    const OccupancyGrid g(5.0, 60.0);
    CHECK(g.cols() == 12);
    CHECK(g.rows() == 12);
    const OccupancyGrid odd(7.0, 60.0);
    CHECK(odd.cols() == 9);
    OccupancyGrid h(5.0, 10.0);
    h.set(0, 1, true);
    CHECK(h.to_ascii() == "#.\n..\n");
    const auto j = h.to_json();
    CHECK(j["delta"] == 5.0);
    CHECK(j["cols"] == 2);
    CHECK(j["rows"] == 2);
    CHECK(h.occupied_count() == 1);
    CHECK(h.cell_center(0, 1) == Vec2{2.5, 7.5});
  }

  TEST_CASE("empty scene gives an empty grid") {
    Scene s(60.0, {}, false);
    CHECK(build_occupancy(s, 5.0).occupied_count() == 0);
  }

  TEST_CASE("delta outside [2, 10] is rejected") {
    Scene s(60.0, {}, false);
    CHECK_THROWS_AS(build_occupancy(s, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_occupancy(s, 11.0), std::invalid_argument);
  }

  TEST_CASE("10 cm square at the centre occupies exactly four cells") {
    Scene s = tf_test::one_body(make_box(10, 10, 10), {30, 30, 0}, true);
    const OccupancyGrid g = build_occupancy(s, 5.0);
    const auto expect = inflated_box_cells({30, 30}, 5, 5, 1.0, 5.0, 12);
    REQUIRE(expect.size() == 4);
    CHECK(g.occupied_count() == 4);
    for (auto [c, r] : expect) CHECK(g.occupied(c, r));
  }

  TEST_CASE("occupancy matches the geometric oracle on offset boxes") {
    for (Vec2 c : {Vec2{17.3, 41.8}, Vec2{36.6, 22.1}, Vec2{28.0, 28.0}}) {
      Scene s = tf_test::one_body(make_box(12, 9, 10), {c.x, c.y, 0}, true);
      const OccupancyGrid g = build_occupancy(s, 5.0);
      const auto expect = inflated_box_cells(c, 6, 4.5, 1.0, 5.0, 12);
      CHECK(g.occupied_count() == static_cast<int>(expect.size()));
      for (auto [col, row] : expect) CHECK(g.occupied(col, row));
    }
  }

  TEST_CASE("movable and static grids differ only next to side walls") {
    const Vec2 c{27.9, 31.2};
    Scene st = tf_test::one_body(make_box(12, 9, 10), {c.x, c.y, 0}, true);
    Scene mv = tf_test::one_body(make_box(12, 9, 10), {c.x, c.y, 0}, false, 0.1, 0.1);
    const OccupancyGrid a = build_occupancy(st, 5.0), b = build_occupancy(mv, 5.0);
    for (int row = 0; row < 12; ++row)
      for (int col = 0; col < 12; ++col) {
        if (a.occupied(col, row) == b.occupied(col, row)) continue;
        const Vec2 p = a.cell_center(col, row);
        const double dx = std::abs(std::abs(p.x - c.x) - 6), dy = std::abs(std::abs(p.y - c.y) - 4.5);
        CHECK(std::min(dx, dy) < 5.0);
      }
  }

  TEST_CASE("kmeans on two symmetric pairs") {
    const std::vector<Vec2> pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
    const KMeansResult r = kmeans(pts, 2, 3);
    std::vector<Vec2> c = r.centers;
    std::sort(c.begin(), c.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
    CHECK(c[0].x == doctest::Approx(0.0));
    CHECK(c[0].y == doctest::Approx(0.5));
    CHECK(c[1].x == doctest::Approx(10.0));
    CHECK(c[1].y == doctest::Approx(0.5));
  }

  TEST_CASE("kmeans with K=1 is the centroid") {
    const std::vector<Vec2> pts{{1, 2}, {3, 5}, {-4, 0}, {7, 1}};
    const KMeansResult r = kmeans(pts, 1, 0);
    CHECK(r.centers[0].x == doctest::Approx(7.0 / 4));
    CHECK(r.centers[0].y == doctest::Approx(2.0));
  }

  TEST_CASE("kmeans under-detection") {
    CHECK_THROWS_AS(kmeans({{0, 0}, {1, 1}}, 3, 0), UnderDetection);
  }

  TEST_CASE("kmeans finds the exhaustive optimum on separated blobs, any seed") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const Vec2 means[] = {{10, 10}, {35, 12}, {22, 40}};
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec2> pts;
      for (const Vec2 m : means)
        for (int i = 0; i < 4; ++i) pts.push_back({m.x + g(rng), m.y + g(rng)});
      std::vector<Vec2> oracle;
      const double best = best_partition_cost(pts, 3, &oracle);
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const KMeansResult r = kmeans(pts, 3, seed);
        CHECK(r.objective.back() == doctest::Approx(best).epsilon(1e-9));
        for (const Vec2 c : r.centers) {
          double dmin = 1e9;
          for (const Vec2 o : oracle) dmin = std::min(dmin, distance(c, o));
          CHECK(dmin < 1e-9);
        }
        for (const Vec2 m : means) {
          double dmin = 1e9;
          for (const Vec2 c : r.centers) dmin = std::min(dmin, distance(c, m));
          CHECK(dmin < 1.5);
        }
      }
    }
  }

  TEST_CASE("kmeans objective never increases") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 60);
    for (int t = 0; t < 20; ++t) {
      std::vector<Vec2> pts(40);
      for (auto& p : pts) p = {u(rng), u(rng)};
      const KMeansResult r = kmeans(pts, 4, t);
      for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-9);
      for (int a : r.assignment) CHECK((a >= 0 && a < 4));
    }
  }

  TEST_CASE("match_centers") {
    const std::vector<Vec2> truth{{10, 10}, {40, 20}, {25, 50}};
    auto same = match_centers(truth, truth, 7.5);
    CHECK(same.success);
    CHECK(same.mean_error == 0.0);

    std::vector<Vec2> off = truth;
    off[1].x += 8.0;
    CHECK_FALSE(match_centers(off, truth, 7.5).success);

    std::vector<Vec2> perm{truth[2], truth[0], truth[1]};
    perm[0].y += 1.0;
    const auto a = match_centers(perm, truth, 7.5);
    std::vector<Vec2> unperm{truth[0], truth[1], {truth[2].x, truth[2].y + 1.0}};
    const auto b = match_centers(unperm, truth, 7.5);
    CHECK(a.success == b.success);
    CHECK(a.mean_error == doctest::Approx(b.mean_error));
    CHECK(a.mean_error == doctest::Approx(1.0 / 3));

    std::vector<Vec2> ts = perm, tt = truth;
    for (auto& p : ts) p += Vec2{3, -2};
    for (auto& p : tt) p += Vec2{3, -2};
    CHECK(match_centers(ts, tt, 7.5).mean_error == doctest::Approx(a.mean_error));

    CHECK_THROWS_AS(match_centers({{0, 0}}, truth, 7.5), std::invalid_argument);
  }

  TEST_CASE("cluster localization of three static cylinders") {
    const auto cyl = make_cylinder(6, 10);
    Scene s(60.0,
            {tf_test::body(cyl, {14, 15, 0}), tf_test::body(cyl, {44, 18, 0}), tf_test::body(cyl, {28, 45, 0})}, true);
    const LocalizationResult r = localize_cluster(s, 3, 5.0, 1);
    CHECK(r.success);
    CHECK(r.center_error < 2.5);
    CHECK(r.perturbation == 0.0);
    CHECK(r.probes_used == 144);
    CHECK(r.estimate.centers.size() == 3);
    std::size_t members = 0;
    for (const auto& m : r.estimate.members) members += m.size();
    CHECK(static_cast<int>(members) == r.grid.occupied_count());
  }

  TEST_CASE("under-detection is a failed localization") {
    Scene s = tf_test::one_body(make_box(10, 10, 10), {30, 30, 0}, true);
    const LocalizationResult r = localize_cluster(s, 5, 5.0, 0);
    CHECK_FALSE(r.success);
    CHECK(r.under_detected);
  }

  TEST_CASE("cluster localization is reproducible") {
    auto run = [] {
      GeneratedScene g = gen_scene({make_box(10, 12, 8), make_cylinder(6, 12), make_prism_ngon(6, 11, 9)}, 3, 21);
      return localize_cluster(g.scene, 3, 5.0, 4);
    };
    const auto a = run(), b = run();
    CHECK(a.center_error == b.center_error);
    CHECK(a.perturbation == b.perturbation);
    CHECK(a.grid.to_ascii() == b.grid.to_ascii());
    for (std::size_t i = 0; i < a.estimate.centers.size(); ++i) CHECK(a.estimate.centers[i] == b.estimate.centers[i]);
  }

  TEST_CASE("particle filter keeps weights normalized") {
    ParticleFilter pf(2, 500, 60.0, 1.0, PfOptions{}, 3);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 144; ++i) {
      pf.update({(i % 12 + 0.5) * 5, (i / 12 + 0.5) * 5}, i % 7 == 0);
      const auto& w = pf.particles().weights;
      CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(ParticleFilter(2, 50, 60.0, 1.0, PfOptions{}, 3), std::invalid_argument);
  }

  TEST_CASE("particle filter with no contacts stays spread out and inside the bin") {
    Scene s(60.0, {}, false);
    ParticleFilter pf(1, 2000, 60.0, 1.0, PfOptions{}, 8);
    // All-floor outcomes at a few probes carry little information.
    for (int i = 0; i < 3; ++i) pf.update({5.0 + 20 * i, 30}, false);
    const auto est = pf.estimate();
    REQUIRE(est.size() == 1);
    CHECK(s.inside_bin(est[0]));
    CHECK(distance(est[0], {30, 30}) < 6.0);
    CHECK(pf.particles().effective_sample_size() > 1000);
  }

  TEST_CASE("single static object: PF and clustering both succeed") {
    Scene a = tf_test::one_body(make_cylinder(6, 10), {22, 35, 0}, true);
    Scene b = tf_test::one_body(make_cylinder(6, 10), {22, 35, 0}, true);
    CHECK(localize_cluster(a, 1, 5.0, 0).success);
    CHECK(localize_pf(b, 1, 2000, 0).success);
  }

  TEST_CASE("SVG rendering carries cells, dots, triangles and crosses") {
    const auto cyl = make_cylinder(6, 10);
    Scene s(60.0, {tf_test::body(cyl, {14, 15, 0}), tf_test::body(cyl, {44, 40, 0})}, true);
    const LocalizationResult r = localize_cluster(s, 2, 5.0, 1);
    const std::string svg = render_localization_svg(r, 60.0);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("<rect") != std::string::npos);
    CHECK(svg.find("<circle") != std::string::npos);
    CHECK(svg.find("<polygon") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
}
