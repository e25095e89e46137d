#pragma once

// Minibatch training of the contrastive encoder and the k-way identification
// protocol used to evaluate it.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "touchfetch/encoder.hpp"
#include "touchfetch/interact.hpp"

namespace touchfetch {

enum class Optimizer { Sgd, Adam };
std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view s);

struct TrainOptions {
  int epochs = 50;
  int batch_pairs = 16;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  Optimizer optimizer = Optimizer::Sgd;
  // Rotate every training sequence by an independent random angle about z.
  bool augment_rotation = true;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sequences are grouped by object_id; objects with fewer than two non-empty
// sequences are ignored. Requires at least 20 usable objects.
EncoderModel train(const std::vector<TapSequence>& data, const EncoderConfig& cfg, const TrainOptions& opts);

struct IdentificationScore {
  int trials = 0;
  int correct = 0;
  double accuracy() const { return trials > 0 ? static_cast<double>(correct) / trials : 0.0; }
};

// k-way protocol: pick `ways` distinct objects, a reference sequence of the
// first (the target), and one sequence per object as candidates, the
// target's taken from a different pose; candidates are shuffled.
IdentificationScore evaluate_identification(const EncoderModel& model, const std::vector<TapSequence>& data,
                                            int ways, int trials, std::uint64_t seed);

std::vector<Vec3> rotate_sequence(std::span<const Vec3> points, double angle);

}  // namespace touchfetch
