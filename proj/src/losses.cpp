#include "touchfetch/losses.hpp"
#include "touchfetch/simd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace touchfetch {

void TrainBatch::validate() const {
  if (sequences.size() < 4 || sequences.size() % 2 != 0)
    throw std::invalid_argument("TrainBatch: need an even number of sequences and at least 2 pairs");
  if (object_ids.size() != sequences.size()) throw std::invalid_argument("TrainBatch: one object id per sequence");
  for (std::size_t i = 0; i < sequences.size(); i += 2)
    if (object_ids[i] != object_ids[i + 1]) throw std::invalid_argument("TrainBatch: pair members differ in object");
}

double info_nce(const std::vector<Embedding>& z, double tau, std::vector<Embedding>* dz) {
  const std::size_t n = z.size();
  if (n < 4 || n % 2 != 0) throw std::invalid_argument("info_nce: need at least 2 pairs");
  const std::size_t e = z.front().size();
  if (dz) dz->assign(n, Embedding(e, 0.0));
  std::vector<double> logits(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i ^ 1U;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      logits[j] = simd::dot(z[i].data(), z[j].data(), e) / tau;
      mx = std::max(mx, logits[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += std::exp(logits[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - logits[pos];
    if (!dz) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double g = (std::exp(logits[j] - lse) - (j == pos ? 1.0 : 0.0)) / (static_cast<double>(n) * tau);
      simd::axpy(g, z[j].data(), (*dz)[i].data(), e);
      simd::axpy(g, z[i].data(), (*dz)[j].data(), e);
    }
  }
  const double loss = total / static_cast<double>(n);
  if (!std::isfinite(loss)) throw NonFiniteLoss("info_nce: non-finite loss");
  return loss;
}

double triplet(const Embedding& a, const Embedding& p, const Embedding& n, double margin, Embedding* da,
               Embedding* dp, Embedding* dn) {
  const std::size_t e = a.size();
  const double loss = margin - simd::dot(a.data(), p.data(), e) + simd::dot(a.data(), n.data(), e);
  if (!std::isfinite(loss)) throw NonFiniteLoss("triplet: non-finite loss");
  const bool active = loss > 0.0;
  if (da) {
    da->assign(e, 0.0);
    if (active)
      for (std::size_t j = 0; j < e; ++j) (*da)[j] = n[j] - p[j];
  }
  if (dp) {
    dp->assign(e, 0.0);
    if (active)
      for (std::size_t j = 0; j < e; ++j) (*dp)[j] = -a[j];
  }
  if (dn) {
    dn->assign(e, 0.0);
    if (active)
      for (std::size_t j = 0; j < e; ++j) (*dn)[j] = a[j];
  }
  return active ? loss : 0.0;
}

namespace {

std::vector<std::unique_ptr<EncoderPass>> run_all(const EncoderModel& model,
                                                  const std::vector<std::vector<Vec3>>& seqs,
                                                  std::vector<Embedding>& z) {
  std::vector<std::unique_ptr<EncoderPass>> passes;
  passes.reserve(seqs.size());
  z.clear();
  for (const auto& s : seqs) {
    passes.push_back(forward(model, s));
    z.push_back(passes.back()->output());
  }
  return passes;
}

}  // namespace

LossValue info_nce_loss(const EncoderModel& model, const TrainBatch& batch) {
  batch.validate();
  std::vector<Embedding> z;
  auto passes = run_all(model, batch.sequences, z);
  std::vector<Embedding> dz;
  LossValue out;
  out.loss = info_nce(z, model.config().temperature, &dz);
  out.grad.assign(model.param_count(), 0.0);
  for (std::size_t i = 0; i < passes.size(); ++i) passes[i]->backward(dz[i], out.grad);
  return out;
}

LossValue triplet_loss(const EncoderModel& model, std::span<const Vec3> anchor, std::span<const Vec3> positive,
                       std::span<const Vec3> negative) {
  auto pa = forward(model, anchor), pp = forward(model, positive), pn = forward(model, negative);
  Embedding da, dp, dn;
  LossValue out;
  out.loss = triplet(pa->output(), pp->output(), pn->output(), model.config().triplet_margin, &da, &dp, &dn);
  out.grad.assign(model.param_count(), 0.0);
  pa->backward(da, out.grad);
  pp->backward(dp, out.grad);
  pn->backward(dn, out.grad);
  return out;
}

LossValue triplet_batch_loss(const EncoderModel& model, const TrainBatch& batch,
                             const std::vector<std::size_t>& negatives) {
  batch.validate();
  const std::size_t n = batch.sequences.size();
  if (negatives.size() != n) throw std::invalid_argument("triplet_batch_loss: one negative per anchor");
  std::vector<Embedding> z;
  auto passes = run_all(model, batch.sequences, z);
  const std::size_t e = z.front().size();
  std::vector<Embedding> dz(n, Embedding(e, 0.0));
  LossValue out;
  Embedding da, dp, dn;
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t neg = negatives[i];
    if (neg >= n || batch.object_ids[neg] == batch.object_ids[i])
      throw std::invalid_argument("triplet_batch_loss: negative must be a different object");
    out.loss += w * triplet(z[i], z[i ^ 1U], z[neg], model.config().triplet_margin, &da, &dp, &dn);
    simd::axpy(w, da.data(), dz[i].data(), e);
    simd::axpy(w, dp.data(), dz[i ^ 1U].data(), e);
    simd::axpy(w, dn.data(), dz[neg].data(), e);
  }
  out.grad.assign(model.param_count(), 0.0);
  for (std::size_t i = 0; i < n; ++i) passes[i]->backward(dz[i], out.grad);
  return out;
}

}  // namespace touchfetch
