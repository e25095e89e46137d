#include "touchfetch/localize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace touchfetch {

OccupancyGrid::OccupancyGrid(double delta, double bin_side, Vec2 origin)
    : delta_(delta), origin_(origin) {
  if (!(delta > 0.0) || !(bin_side > 0.0)) throw std::invalid_argument("OccupancyGrid: delta and bin_side must be positive");
  cols_ = rows_ = static_cast<int>(std::ceil(bin_side / delta - 1e-9));
  cells_.assign(static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_), 0);
}

std::size_t OccupancyGrid::index(int col, int row) const {
  if (col < 0 || row < 0 || col >= cols_ || row >= rows_) throw std::out_of_range("OccupancyGrid: cell out of range");
  return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(col);
}

Vec2 OccupancyGrid::cell_center(int col, int row) const {
  return {origin_.x + (col + 0.5) * delta_, origin_.y + (row + 0.5) * delta_};
}

std::vector<Vec2> OccupancyGrid::occupied_centers() const {
  std::vector<Vec2> out;
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c)
      if (occupied(c, r)) out.push_back(cell_center(c, r));
  return out;
}

int OccupancyGrid::occupied_count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::string OccupancyGrid::to_ascii() const {
  std::string s;
  for (int r = rows_ - 1; r >= 0; --r) {
    for (int c = 0; c < cols_; ++c) s += occupied(c, r) ? '#' : '.';
    s += '\n';
  }
  return s;
}

nlohmann::json OccupancyGrid::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < rows_; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < cols_; ++c) row.push_back(occupied(c, r) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return {{"delta", delta_}, {"cols", cols_}, {"rows", rows_}, {"origin", {origin_.x, origin_.y}}, {"cells", rows}};
}

OccupancyGrid build_occupancy(Scene& scene, double delta) {
  if (!(delta >= 2.0 && delta <= 10.0)) throw std::invalid_argument("build_occupancy: delta must be in [2, 10] cm");
  OccupancyGrid grid(delta, scene.bin_side());
  for (int r = 0; r < grid.rows(); ++r)
    for (int c = 0; c < grid.cols(); ++c) {
      Vec2 p = grid.cell_center(c, r);
      p = {std::min(p.x, scene.bin_side()), std::min(p.y, scene.bin_side())};
      grid.set(c, r, !probe_descend(scene, p).on_floor());
    }
  return grid;
}

namespace {

double sq(Vec2 a, Vec2 b) { return dot(a - b, a - b); }

int nearest(const std::vector<Vec2>& centers, Vec2 p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = sq(centers[c], p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vec2>& points, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (static_cast<int>(points.size()) < k)
    throw UnderDetection("kmeans: " + std::to_string(points.size()) + " occupied cells for " + std::to_string(k) +
                         " objects");
  Rng rng(seed);
  KMeansResult res;
  // k-means++ seeding.
  res.centers.push_back(points[std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng)]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(res.centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = sq(points[i], res.centers[static_cast<std::size_t>(nearest(res.centers, points[i]))]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform(rng, 0.0, total);
      for (pick = 0; pick + 1 < points.size(); ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng);
    }
    res.centers.push_back(points[pick]);
  }

  res.assignment.assign(points.size(), -1);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    bool changed = false;
    double obj = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const int c = nearest(res.centers, points[i]);
      if (c != res.assignment[i]) changed = true;
      res.assignment[i] = c;
      obj += sq(points[i], res.centers[static_cast<std::size_t>(c)]);
    }
    res.objective.push_back(obj);
    if (!changed) break;

    std::vector<Vec2> sum(static_cast<std::size_t>(k));
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sum[static_cast<std::size_t>(res.assignment[i])] += points[i];
      ++count[static_cast<std::size_t>(res.assignment[i])];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (count[cu] > 0) {
        res.centers[cu] = (1.0 / count[cu]) * sum[cu];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its own centre.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = sq(points[i], res.centers[static_cast<std::size_t>(res.assignment[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      res.centers[cu] = points[far];
      res.assignment[far] = c;
    }
  }
  return res;
}

MatchResult match_centers(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth, double threshold) {
  if (pred.size() != truth.size()) throw std::invalid_argument("match_centers: size mismatch");
  if (pred.size() > 8) throw std::invalid_argument("match_centers: exhaustive matching limited to K <= 8");
  MatchResult best;
  if (pred.empty()) {
    best.success = true;
    return best;
  }
  std::vector<int> perm(pred.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) cost += distance(pred[i], truth[static_cast<std::size_t>(perm[i])]);
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      best.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.success = true;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!(distance(pred[i], truth[static_cast<std::size_t>(best.assignment[i])]) < threshold)) best.success = false;
  best.mean_error = best_cost / static_cast<double>(pred.size());
  return best;
}

std::vector<Vec2> body_centroids(const Scene& scene) {
  std::vector<Vec2> out;
  for (const auto& b : scene.bodies()) out.push_back(b.pose.to_world(b.shape.volume_centroid()));
  return out;
}

LocalizationResult localize_cluster(Scene& scene, int k, double delta, std::uint64_t seed) {
  LocalizationResult res;
  res.grid = build_occupancy(scene, delta);
  res.probes_used = res.grid.cols() * res.grid.rows();
  res.truth = body_centroids(scene);
  res.perturbation = mean_displacement(scene);
  const auto pts = res.grid.occupied_centers();
  KMeansResult km;
  try {
    km = kmeans(pts, k, seed);
  } catch (const UnderDetection&) {
    res.under_detected = true;
    res.success = false;
    res.center_error = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.estimate.centers = km.centers;
  res.estimate.members.assign(static_cast<std::size_t>(k), {});
  for (std::size_t i = 0; i < pts.size(); ++i)
    res.estimate.members[static_cast<std::size_t>(km.assignment[i])].push_back(pts[i]);
  if (static_cast<int>(res.truth.size()) == k) {
    const MatchResult m = match_centers(res.estimate.centers, res.truth, kLocalizationThreshold);
    res.success = m.success;
    res.center_error = m.mean_error;
  }
  return res;
}

std::string render_localization_svg(const LocalizationResult& result, double bin_side) {
  constexpr double px = 10.0;
  const double size = bin_side * px;
  auto X = [&](double x) { return x * px; };
  auto Y = [&](double y) { return size - y * px; };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
    << size << ' ' << size << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"white\" stroke=\"black\"/>\n";
  const OccupancyGrid& g = result.grid;
  const double cell = g.delta() * px;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      const Vec2 cc = g.cell_center(c, r);
      o << "<rect x=\"" << X(cc.x) - cell / 2 << "\" y=\"" << Y(cc.y) - cell / 2 << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << (g.occupied(c, r) ? "#cccccc" : "none")
        << "\" stroke=\"#eeeeee\"/>\n";
    }
  for (std::size_t k = 0; k < result.estimate.members.size(); ++k)
    for (Vec2 p : result.estimate.members[k])
      o << "<circle cx=\"" << X(p.x) << "\" cy=\"" << Y(p.y) << "\" r=\"6\" fill=\"" << palette[k % 7] << "\"/>\n";
  for (Vec2 t : result.truth) {
    const double x = X(t.x), y = Y(t.y);
    o << "<polygon points=\"" << x << ',' << y - 9 << ' ' << x - 8 << ',' << y + 6 << ' ' << x + 8 << ',' << y + 6
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  for (Vec2 e : result.estimate.centers) {
    const double x = X(e.x), y = Y(e.y);
    o << "<path d=\"M" << x - 7 << ' ' << y - 7 << " L" << x + 7 << ' ' << y + 7 << " M" << x - 7 << ' ' << y + 7
      << " L" << x + 7 << ' ' << y - 7 << "\" stroke=\"red\" stroke-width=\"2\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace touchfetch
