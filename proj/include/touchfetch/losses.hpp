#pragma once

// Contrastive objectives on unit embeddings, with gradients pulled back
// through the encoder.

#include <span>
#include <stdexcept>
#include <vector>

#include "touchfetch/encoder.hpp"

namespace touchfetch {

// 2B sequences; sequences 2i and 2i+1 are a positive pair (same object,
// different poses). Every other member of the batch is a negative.
struct TrainBatch {
  std::vector<std::vector<Vec3>> sequences;
  std::vector<int> object_ids;

  std::size_t pairs() const { return sequences.size() / 2; }
  void validate() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossValue {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d params, same layout as the model
};

// Mean over anchors of -log softmax of the positive among the other 2B-1
// members, logits = cosine / tau. `dz` (optional) receives d loss / d z.
double info_nce(const std::vector<Embedding>& z, double tau, std::vector<Embedding>* dz = nullptr);

// max(0, margin - cos(a, p) + cos(a, n)) on unit embeddings.
double triplet(const Embedding& a, const Embedding& p, const Embedding& n, double margin, Embedding* da = nullptr,
               Embedding* dp = nullptr, Embedding* dn = nullptr);

LossValue info_nce_loss(const EncoderModel& model, const TrainBatch& batch);
LossValue triplet_loss(const EncoderModel& model, std::span<const Vec3> anchor, std::span<const Vec3> positive,
                       std::span<const Vec3> negative);
// Mean triplet loss with anchor i, positive i^1 and negative negatives[i].
LossValue triplet_batch_loss(const EncoderModel& model, const TrainBatch& batch,
                             const std::vector<std::size_t>& negatives);

}  // namespace touchfetch
