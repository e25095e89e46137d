#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "touchfetch/localize.hpp"

namespace touchfetch {

double ParticleSet::effective_sample_size() const {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return s > 0.0 ? 1.0 / s : 0.0;
}

ParticleFilter::ParticleFilter(int k, int n_particles, double bin_side, double finger_radius, const PfOptions& opts,
                               std::uint64_t seed)
    : bin_side_(bin_side), finger_radius_(finger_radius), opts_(opts), rng_(seed) {
  if (k < 1) throw std::invalid_argument("ParticleFilter: k must be >= 1");
  if (n_particles < 100) throw std::invalid_argument("ParticleFilter: need at least 100 particles");
  set_.k = k;
  const auto dim = 2 * static_cast<std::size_t>(k);
  set_.states.resize(dim * static_cast<std::size_t>(n_particles));
  set_.weights.assign(static_cast<std::size_t>(n_particles), 1.0 / n_particles);
  for (int p = 0; p < n_particles; ++p) {
    double* s = &set_.states[static_cast<std::size_t>(p) * dim];
    for (int o = 0; o < k; ++o) {
      for (int attempt = 0;; ++attempt) {
        const Vec2 c{uniform(rng_, 0.0, bin_side), uniform(rng_, 0.0, bin_side)};
        bool ok = true;
        for (int q = 0; q < o && ok; ++q) ok = distance(c, {s[2 * q], s[2 * q + 1]}) >= opts_.min_separation;
        if (ok || attempt > 1000) {
          s[2 * o] = c.x;
          s[2 * o + 1] = c.y;
          break;
        }
      }
    }
  }
}

void ParticleFilter::update(Vec2 probe, bool contact) {
  const std::size_t dim = 2 * static_cast<std::size_t>(set_.k);
  const double reach = opts_.disc_radius + finger_radius_;
  const double reach2 = reach * reach;
  std::normal_distribution<double> noise(0.0, opts_.diffusion);
  double total = 0.0;
  for (std::size_t p = 0; p < set_.size(); ++p) {
    double* s = &set_.states[p * dim];
    if (opts_.diffusion > 0.0)
      for (std::size_t d = 0; d < dim; ++d) s[d] = std::clamp(s[d] + noise(rng_), 0.0, bin_side_);
    bool predicted = false;
    for (int o = 0; o < set_.k && !predicted; ++o) {
      const double dx = s[2 * o] - probe.x, dy = s[2 * o + 1] - probe.y;
      predicted = dx * dx + dy * dy <= reach2;
    }
    double like;
    if (predicted) like = contact ? 1.0 - opts_.false_negative : opts_.false_negative;
    else like = contact ? opts_.false_positive : 1.0 - opts_.false_positive;
    set_.weights[p] *= like;
    total += set_.weights[p];
  }
  if (!(total > 0.0)) {
    std::fill(set_.weights.begin(), set_.weights.end(), 1.0 / static_cast<double>(set_.size()));
  } else {
    for (double& w : set_.weights) w /= total;
  }
  if (set_.effective_sample_size() < 0.5 * static_cast<double>(set_.size())) resample();
}

void ParticleFilter::resample() {
  const std::size_t n = set_.size();
  const std::size_t dim = 2 * static_cast<std::size_t>(set_.k);
  std::discrete_distribution<std::size_t> pick(set_.weights.begin(), set_.weights.end());
  std::vector<double> next(set_.states.size());
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t src = pick(rng_);
    std::copy_n(&set_.states[src * dim], dim, &next[p * dim]);
  }
  set_.states.swap(next);
  std::fill(set_.weights.begin(), set_.weights.end(), 1.0 / static_cast<double>(n));
  ++resamples_;
}

std::vector<Vec2> ParticleFilter::estimate() const {
  const int k = set_.k;
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(set_.weights.begin(), set_.weights.end()) - set_.weights.begin());
  std::vector<Vec2> ref(static_cast<std::size_t>(k));
  for (int o = 0; o < k; ++o) ref[static_cast<std::size_t>(o)] = set_.center(best, o);

  std::vector<int> perm(static_cast<std::size_t>(k)), best_perm;
  std::vector<Vec2> mean(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < set_.size(); ++p) {
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int o = 0; o < k; ++o) {
        const Vec2 d = set_.center(p, perm[static_cast<std::size_t>(o)]) - ref[static_cast<std::size_t>(o)];
        cost += dot(d, d);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int o = 0; o < k; ++o)
      mean[static_cast<std::size_t>(o)] += set_.weights[p] * set_.center(p, best_perm[static_cast<std::size_t>(o)]);
  }
  return mean;
}

LocalizationResult localize_pf(Scene& scene, int k, int n_particles, std::uint64_t seed, const PfOptions& opts) {
  LocalizationResult res;
  ParticleFilter pf(k, n_particles, scene.bin_side(), scene.physics().finger_radius, opts, seed);
  res.grid = build_occupancy(scene, opts.delta);
  for (int r = 0; r < res.grid.rows(); ++r)
    for (int c = 0; c < res.grid.cols(); ++c) pf.update(res.grid.cell_center(c, r), res.grid.occupied(c, r));
  res.probes_used = res.grid.cols() * res.grid.rows();
  res.truth = body_centroids(scene);
  res.perturbation = mean_displacement(scene);
  res.estimate.centers = pf.estimate();
  res.estimate.members.assign(static_cast<std::size_t>(k), {});
  for (Vec2 p : res.grid.occupied_centers()) {
    std::size_t best = 0;
    for (std::size_t o = 1; o < res.estimate.centers.size(); ++o)
      if (distance(p, res.estimate.centers[o]) < distance(p, res.estimate.centers[best])) best = o;
    res.estimate.members[best].push_back(p);
  }
  if (static_cast<int>(res.truth.size()) == k) {
    const MatchResult m = match_centers(res.estimate.centers, res.truth, kLocalizationThreshold);
    res.success = m.success;
    res.center_error = m.mean_error;
  }
  return res;
}

}  // namespace touchfetch
