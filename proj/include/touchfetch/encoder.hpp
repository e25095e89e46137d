#pragma once

// Contrastive sequence encoder over tap sequences. Two architectures share the
// per-point lift, mean pooling, the embedding head and L2 normalization:
//   attention: learned positional encoding + pre-LN transformer blocks
//   recurrent: a GRU over the lifted points
// Gradients are computed by hand-written reverse passes in double precision.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "touchfetch/geometry.hpp"
#include "touchfetch/interact.hpp"

namespace touchfetch {

enum class Arch { Attention, Recurrent };
enum class LossKind { InfoNce, Triplet };

std::string_view arch_name(Arch a);
Arch parse_arch(std::string_view s);
std::string_view loss_name(LossKind l);
LossKind parse_loss(std::string_view s);

struct EncoderConfig {
  Arch arch = Arch::Attention;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 128;
  int d_embed = 32;
  int max_seq_len = 256;
  double temperature = 0.1;
  LossKind loss = LossKind::InfoNce;
  double triplet_margin = 0.2;
  // Points are multiplied by this before the lift (cm -> dm keeps the
  // lifted activations O(1)).
  double input_scale = 0.1;

  void validate() const;
  // Small configuration used for finite-difference gradient checks.
  static EncoderConfig reduced(Arch arch);
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct ParamShape {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t size() const;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::vector<double> loss_curve;  // mean loss per epoch
  std::string optimizer;
};

class EncoderModel {
 public:
  // Scaled-uniform weights, zero biases, unit layer-norm gains.
  static EncoderModel init(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<ParamShape>& shapes() const { return shapes_; }
  const ParamShape& shape(std::string_view name) const;
  const double* param(std::string_view name) const { return params_.data() + shape(name).offset; }
  double* param(std::string_view name) { return params_.data() + shape(name).offset; }

  TrainMeta meta;

  nlohmann::json to_json() const;
  // Rejects checkpoints whose shape table disagrees with their config.
  static EncoderModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EncoderModel load(const std::filesystem::path& path);

 private:
  explicit EncoderModel(const EncoderConfig& cfg);

  EncoderConfig config_;
  std::vector<ParamShape> shapes_;
  std::vector<double> params_;
};

// Named parameter layout implied by a configuration.
std::vector<ParamShape> parameter_layout(const EncoderConfig& cfg);

// Keeps at most `max_len` points, chosen uniformly at random without
// replacement (seeded) and kept in their original order.
std::vector<Vec3> subsample(std::span<const Vec3> points, int max_len, std::uint64_t seed);

// One differentiable evaluation of the encoder on one sequence.
class EncoderPass {
 public:
  virtual ~EncoderPass() = default;
  // Unit-norm embedding.
  virtual const std::vector<double>& output() const = 0;
  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  virtual void backward(std::span<const double> d_output, std::span<double> grad) = 0;
};

// Throws std::invalid_argument on an empty sequence or one longer than
// max_seq_len (callers subsample first).
std::unique_ptr<EncoderPass> forward(const EncoderModel& model, std::span<const Vec3> points);

using Embedding = std::vector<double>;

// Subsamples with the model seed, then runs the forward pass.
Embedding embed(const EncoderModel& model, std::span<const Vec3> points);
Embedding embed(const EncoderModel& model, const TapSequence& seq);

double cosine(std::span<const double> a, std::span<const double> b);

struct IdentifyResult {
  std::size_t index = 0;
  std::vector<double> similarities;  // -inf for empty candidates
};

// Throws std::invalid_argument when the reference is empty or there are no
// candidates.
IdentifyResult identify(const EncoderModel& model, const TapSequence& reference,
                        const std::vector<TapSequence>& candidates);
IdentifyResult identify_embeddings(const Embedding& reference, const std::vector<Embedding>& candidates);

namespace detail {
std::unique_ptr<EncoderPass> attention_forward(const EncoderModel& model, std::span<const Vec3> points);
std::unique_ptr<EncoderPass> recurrent_forward(const EncoderModel& model, std::span<const Vec3> points);
}  // namespace detail

}  // namespace touchfetch
