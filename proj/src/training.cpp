#include "touchfetch/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "touchfetch/losses.hpp"
#include "touchfetch/rng.hpp"
#include "touchfetch/simd.hpp"

namespace touchfetch {

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

std::vector<Vec3> rotate_sequence(std::span<const Vec3> points, double angle) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    const Vec2 r = rotate(p.xy(), angle);
    out.push_back({r.x, r.y, p.z});
  }
  return out;
}

namespace {

using Groups = std::vector<std::vector<const TapSequence*>>;

Groups group_by_object(const std::vector<TapSequence>& data) {
  std::map<int, std::vector<const TapSequence*>> by_id;
  for (const auto& s : data)
    if (!s.empty()) by_id[s.object_id].push_back(&s);
  Groups out;
  for (auto& [id, seqs] : by_id)
    if (seqs.size() >= 2) out.push_back(std::move(seqs));
  return out;
}

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_), c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
  std::vector<double> m_, v_;
  int t_ = 0;
};

}  // namespace

EncoderModel train(const std::vector<TapSequence>& data, const EncoderConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (opts.epochs < 1 || opts.batch_pairs < 2 || !(opts.learning_rate > 0.0) || !(opts.clip_norm > 0.0))
    throw std::invalid_argument("train: invalid options");
  const Groups groups = group_by_object(data);
  if (groups.size() < 20)
    throw std::invalid_argument("train: need at least 20 objects with two or more sequences, got " +
                                std::to_string(groups.size()));
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(opts.batch_pairs), groups.size());
  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  const std::size_t steps = std::max<std::size_t>(1, (total + 2 * b - 1) / (2 * b));

  EncoderModel model = EncoderModel::init(cfg, opts.seed);
  model.meta.optimizer = std::string(optimizer_name(opts.optimizer));
  Adam adam(model.param_count());
  Rng rng(derive_seed(opts.seed, {0x7a1e}));
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);

  double initial = 0.0;
  int over = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      // B distinct objects, two distinct poses each.
      for (std::size_t i = 0; i < b; ++i)
        std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, order.size() - 1)(rng)]);
      TrainBatch batch;
      for (std::size_t i = 0; i < b; ++i) {
        const auto& g = groups[order[i]];
        const std::size_t a = std::uniform_int_distribution<std::size_t>(0, g.size() - 1)(rng);
        std::size_t p = std::uniform_int_distribution<std::size_t>(0, g.size() - 2)(rng);
        if (p >= a) ++p;
        for (const TapSequence* s : {g[a], g[p]}) {
          auto pts = subsample(s->points, cfg.max_seq_len, rng());
          if (opts.augment_rotation) pts = rotate_sequence(pts, uniform(rng, -std::numbers::pi, std::numbers::pi));
          batch.sequences.push_back(std::move(pts));
          batch.object_ids.push_back(static_cast<int>(i));
        }
      }
      LossValue lv;
      try {
        if (cfg.loss == LossKind::InfoNce) {
          lv = info_nce_loss(model, batch);
        } else {
          std::vector<std::size_t> neg(batch.sequences.size());
          for (std::size_t i = 0; i < neg.size(); ++i) {
            std::size_t j = std::uniform_int_distribution<std::size_t>(0, neg.size() - 3)(rng);
            if (j >= (i & ~std::size_t{1})) j += 2;
            neg[i] = j;
          }
          lv = triplet_batch_loss(model, batch, neg);
        }
      } catch (const NonFiniteLoss& e) {
        throw TrainingDiverged("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what());
      }
      double gn = 0.0;
      for (double g : lv.grad) gn += g * g;
      gn = std::sqrt(gn);
      if (!std::isfinite(gn))
        throw TrainingDiverged("epoch " + std::to_string(epoch) + ": non-finite gradient");
      if (gn > opts.clip_norm)
        for (double& g : lv.grad) g *= opts.clip_norm / gn;
      if (opts.optimizer == Optimizer::Adam) {
        adam.step(model.params(), lv.grad, opts.learning_rate);
      } else {
        simd::axpy(-opts.learning_rate, lv.grad.data(), model.params().data(), model.param_count());
      }
      sum += lv.loss;
    }
    const double mean = sum / static_cast<double>(steps);
    model.meta.loss_curve.push_back(mean);
    model.meta.epochs = epoch + 1;
    if (epoch == 0) initial = mean;
    over = mean > 10.0 * initial ? over + 1 : 0;
    if (over >= 3) {
      std::ostringstream msg;
      msg << "training diverged: epoch " << epoch << " loss " << mean << " exceeds 10x the initial " << initial
          << " for 3 consecutive epochs";
      throw TrainingDiverged(msg.str());
    }
    if (opts.on_epoch) opts.on_epoch(epoch, mean);
  }
  return model;
}

IdentificationScore evaluate_identification(const EncoderModel& model, const std::vector<TapSequence>& data,
                                            int ways, int trials, std::uint64_t seed) {
  if (ways < 1 || trials < 1) throw std::invalid_argument("evaluate_identification: ways and trials must be >= 1");
  const Groups groups = group_by_object(data);
  if (groups.size() < static_cast<std::size_t>(ways))
    throw std::invalid_argument("evaluate_identification: fewer objects than ways");
  std::map<const TapSequence*, Embedding> cache;
  auto emb = [&](const TapSequence* s) -> const Embedding& {
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, embed(model, *s)).first;
    return it->second;
  };
  Rng rng(derive_seed(seed, {0x1de7}));
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  IdentificationScore score;
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < ways; ++i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(i), order.size() - 1)(rng)]);
    const auto& tg = groups[order[0]];
    const std::size_t ref = std::uniform_int_distribution<std::size_t>(0, tg.size() - 1)(rng);
    std::size_t pos = std::uniform_int_distribution<std::size_t>(0, tg.size() - 2)(rng);
    if (pos >= ref) ++pos;
    std::vector<const TapSequence*> cands{tg[pos]};
    for (int i = 1; i < ways; ++i) {
      const auto& g = groups[order[static_cast<std::size_t>(i)]];
      cands.push_back(g[std::uniform_int_distribution<std::size_t>(0, g.size() - 1)(rng)]);
    }
    std::vector<std::size_t> perm(cands.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Embedding> ce;
    std::size_t truth = 0;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      ce.push_back(emb(cands[perm[k]]));
      if (perm[k] == 0) truth = k;
    }
    const auto r = identify_embeddings(emb(tg[ref]), ce);
    ++score.trials;
    if (r.index == truth) ++score.correct;
  }
  return score;
}

}  // namespace touchfetch
