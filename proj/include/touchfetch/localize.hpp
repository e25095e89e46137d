#pragma once

// Object localization from vertical probes: a binary occupancy grid clustered
// with k-means, and a joint-hypothesis particle filter baseline.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "touchfetch/rng.hpp"
#include "touchfetch/world.hpp"

namespace touchfetch {

class OccupancyGrid {
 public:
  OccupancyGrid(double delta, double bin_side, Vec2 origin = {});

  double delta() const { return delta_; }
  int cols() const { return cols_; }  // along x
  int rows() const { return rows_; }  // along y
  Vec2 origin() const { return origin_; }
  Vec2 cell_center(int col, int row) const;
  bool occupied(int col, int row) const { return cells_.at(index(col, row)) != 0; }
  void set(int col, int row, bool v) { cells_.at(index(col, row)) = v ? 1 : 0; }
  std::vector<Vec2> occupied_centers() const;  // raster order
  int occupied_count() const;

  std::string to_ascii() const;  // top row first, '#' occupied
  nlohmann::json to_json() const;

 private:
  std::size_t index(int col, int row) const;

  double delta_;
  int cols_;
  int rows_;
  Vec2 origin_;
  std::vector<std::uint8_t> cells_;  // row-major, row 0 at y = origin.y
};

// Probes every cell centre in raster order (row by row, increasing x).
OccupancyGrid build_occupancy(Scene& scene, double delta);

class UnderDetection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KMeansResult {
  std::vector<Vec2> centers;
  std::vector<int> assignment;
  std::vector<double> objective;  // sum of squared distances after each assignment step
  int iterations = 0;
};

// Lloyd's algorithm from seeded k-means++ initialization. Throws
// UnderDetection when there are fewer points than clusters.
KMeansResult kmeans(const std::vector<Vec2>& points, int k, std::uint64_t seed, int max_iter = 100);

struct MatchResult {
  bool success = false;
  double mean_error = 0.0;
  std::vector<int> assignment;  // pred index -> truth index
};

// Minimum-cost perfect matching by exhaustive search (K <= 8).
MatchResult match_centers(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth, double threshold);

struct CenterEstimate {
  std::vector<Vec2> centers;
  std::vector<std::vector<Vec2>> members;  // occupied cells per cluster
};

struct LocalizationResult {
  CenterEstimate estimate;
  bool success = false;
  double center_error = 0.0;
  double perturbation = 0.0;  // mean body displacement caused by probing
  int probes_used = 0;
  bool under_detected = false;
  std::vector<Vec2> truth;  // body centroids after probing
  OccupancyGrid grid{5.0, 5.0};
};

inline constexpr double kLocalizationThreshold = 7.5;

std::vector<Vec2> body_centroids(const Scene& scene);

LocalizationResult localize_cluster(Scene& scene, int k, double delta = 5.0, std::uint64_t seed = 0);

struct PfOptions {
  double delta = 5.0;
  double disc_radius = 6.0;
  double false_positive = 0.05;
  double false_negative = 0.05;
  double diffusion = 0.5;
  double min_separation = 2.0;
};

struct ParticleSet {
  int k = 0;
  std::vector<double> states;   // particle-major, 2k values each
  std::vector<double> weights;  // sum to 1

  std::size_t size() const { return weights.size(); }
  Vec2 center(std::size_t particle, int obj) const {
    const std::size_t o = particle * 2 * static_cast<std::size_t>(k) + 2 * static_cast<std::size_t>(obj);
    return {states[o], states[o + 1]};
  }
  double effective_sample_size() const;
};

// Binary-measurement particle filter. `update` folds one probe outcome in.
class ParticleFilter {
 public:
  ParticleFilter(int k, int n_particles, double bin_side, double finger_radius, const PfOptions& opts,
                 std::uint64_t seed);
  void update(Vec2 probe, bool contact);
  // Weighted mean after aligning each particle's labels to the heaviest one.
  std::vector<Vec2> estimate() const;
  const ParticleSet& particles() const { return set_; }
  int resample_count() const { return resamples_; }

 private:
  void resample();

  ParticleSet set_;
  double bin_side_;
  double finger_radius_;
  PfOptions opts_;
  Rng rng_;
  int resamples_ = 0;
};

LocalizationResult localize_pf(Scene& scene, int k, int n_particles, std::uint64_t seed,
                               const PfOptions& opts = {});

// SVG of the grid with cluster members as dots, true centres as triangles and
// estimates as crosses.
std::string render_localization_svg(const LocalizationResult& result, double bin_side);

}  // namespace touchfetch
