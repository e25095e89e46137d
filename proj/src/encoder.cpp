#include "touchfetch/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "touchfetch/rng.hpp"
#include "touchfetch/scene_io.hpp"
#include "touchfetch/simd.hpp"

namespace touchfetch {

std::string_view arch_name(Arch a) { return a == Arch::Attention ? "attention" : "recurrent"; }

Arch parse_arch(std::string_view s) {
  if (s == "attention") return Arch::Attention;
  if (s == "recurrent") return Arch::Recurrent;
  throw std::invalid_argument("unknown encoder architecture: " + std::string(s));
}

std::string_view loss_name(LossKind l) { return l == LossKind::InfoNce ? "infonce" : "triplet"; }

LossKind parse_loss(std::string_view s) {
  if (s == "infonce") return LossKind::InfoNce;
  if (s == "triplet") return LossKind::Triplet;
  throw std::invalid_argument("unknown loss: " + std::string(s));
}

void EncoderConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw std::invalid_argument("EncoderConfig: d_model must be a positive multiple of n_heads");
  if (n_layers < 0 || d_ff < 1 || d_embed < 1 || max_seq_len < 1)
    throw std::invalid_argument("EncoderConfig: sizes must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("EncoderConfig: temperature must be positive");
  if (!(triplet_margin >= 0.0)) throw std::invalid_argument("EncoderConfig: triplet margin must be >= 0");
  if (!(input_scale > 0.0)) throw std::invalid_argument("EncoderConfig: input_scale must be positive");
}

EncoderConfig EncoderConfig::reduced(Arch arch) {
  EncoderConfig c;
  c.arch = arch;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.d_embed = 4;
  c.max_seq_len = 16;
  return c;
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"arch", arch_name(c.arch)},   {"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},      {"d_ff", c.d_ff},               {"d_embed", c.d_embed},
          {"max_seq_len", c.max_seq_len}, {"temperature", c.temperature}, {"loss", loss_name(c.loss)},
          {"triplet_margin", c.triplet_margin}, {"input_scale", c.input_scale}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.arch = parse_arch(j.value("arch", std::string(arch_name(c.arch))));
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.d_embed = j.value("d_embed", c.d_embed);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.temperature = j.value("temperature", c.temperature);
  c.loss = parse_loss(j.value("loss", std::string(loss_name(c.loss))));
  c.triplet_margin = j.value("triplet_margin", c.triplet_margin);
  c.input_scale = j.value("input_scale", c.input_scale);
  c.validate();
  return c;
}

std::size_t ParamShape::size() const {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<ParamShape> parameter_layout(const EncoderConfig& c) {
  c.validate();
  std::vector<ParamShape> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> dims) {
    ParamShape s{std::move(name), std::move(dims), offset};
    offset += s.size();
    out.push_back(std::move(s));
  };
  const int d = c.d_model;
  add("lift.weight", {3, d});
  add("lift.bias", {d});
  if (c.arch == Arch::Attention) {
    add("pos", {c.max_seq_len, d});
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      add(p + "ln1.gain", {d});
      add(p + "ln1.bias", {d});
      for (const char* m : {"q", "k", "v", "o"}) {
        add(p + "attn.w" + m, {d, d});
        add(p + "attn.b" + m, {d});
      }
      add(p + "ln2.gain", {d});
      add(p + "ln2.bias", {d});
      add(p + "ff.w1", {d, c.d_ff});
      add(p + "ff.b1", {c.d_ff});
      add(p + "ff.w2", {c.d_ff, d});
      add(p + "ff.b2", {d});
    }
    add("final_ln.gain", {d});
    add("final_ln.bias", {d});
  } else {
    add("gru.wx", {d, 3 * d});
    add("gru.bx", {3 * d});
    add("gru.wh", {d, 3 * d});
    add("gru.bh", {3 * d});
  }
  add("head.weight", {d, c.d_embed});
  add("head.bias", {c.d_embed});
  return out;
}

EncoderModel::EncoderModel(const EncoderConfig& cfg) : config_(cfg), shapes_(parameter_layout(cfg)) {
  params_.assign(shapes_.back().offset + shapes_.back().size(), 0.0);
}

const ParamShape& EncoderModel::shape(std::string_view name) const {
  for (const auto& s : shapes_)
    if (s.name == name) return s;
  throw std::out_of_range("EncoderModel: no parameter named " + std::string(name));
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

EncoderModel EncoderModel::init(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderModel m(cfg);
  m.meta.seed = seed;
  Rng rng(derive_seed(seed, {0x1417}));
  for (const auto& s : m.shapes_) {
    double* p = m.params_.data() + s.offset;
    if (ends_with(s.name, "gain")) {
      std::fill(p, p + s.size(), 1.0);
    } else if (s.name == "pos") {
      for (std::size_t i = 0; i < s.size(); ++i) p[i] = uniform(rng, -0.1, 0.1);
    } else if (s.dims.size() == 2) {
      const double a = std::sqrt(6.0 / (s.dims[0] + s.dims[1]));
      for (std::size_t i = 0; i < s.size(); ++i) p[i] = uniform(rng, -a, a);
    }
  }
  return m;
}

nlohmann::json EncoderModel::to_json() const {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : shapes_) shapes.push_back({{"name", s.name}, {"dims", s.dims}});
  return {{"format", "touchfetch-encoder"},
          {"version", 1},
          {"config", touchfetch::to_json(config_)},
          {"seed", meta.seed},
          {"epochs", meta.epochs},
          {"optimizer", meta.optimizer},
          {"loss_curve", meta.loss_curve},
          {"shapes", std::move(shapes)},
          {"params", params_}};
}

EncoderModel EncoderModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "touchfetch-encoder")
    throw std::runtime_error("checkpoint: not an encoder checkpoint");
  EncoderModel m(encoder_config_from_json(j.at("config")));
  const auto& shapes = j.at("shapes");
  if (shapes.size() != m.shapes_.size())
    throw std::runtime_error("checkpoint: parameter table has " + std::to_string(shapes.size()) + " entries, config implies " +
                             std::to_string(m.shapes_.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto name = shapes[i].at("name").get<std::string>();
    const auto dims = shapes[i].at("dims").get<std::vector<int>>();
    if (name != m.shapes_[i].name || dims != m.shapes_[i].dims)
      throw std::runtime_error("checkpoint: shape mismatch at parameter '" + name + "'");
  }
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != m.params_.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(m.params_.size()) + " parameters, found " +
                             std::to_string(params.size()));
  for (double v : params)
    if (!std::isfinite(v)) throw std::runtime_error("checkpoint: non-finite parameter");
  m.params_ = std::move(params);
  m.meta.seed = j.value("seed", std::uint64_t{0});
  m.meta.epochs = j.value("epochs", 0);
  m.meta.optimizer = j.value("optimizer", std::string());
  m.meta.loss_curve = j.value("loss_curve", std::vector<double>{});
  return m;
}

void EncoderModel::save(const std::filesystem::path& path) const { write_json_file(path, to_json()); }

EncoderModel EncoderModel::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

std::vector<Vec3> subsample(std::span<const Vec3> points, int max_len, std::uint64_t seed) {
  if (max_len < 1) throw std::invalid_argument("subsample: max_len must be >= 1");
  if (points.size() <= static_cast<std::size_t>(max_len)) return {points.begin(), points.end()};
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {points.size(), 0x5ab5}));
  // Partial Fisher-Yates, then restore sequence order.
  for (std::size_t i = 0; i < static_cast<std::size_t>(max_len); ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(max_len));
  std::sort(idx.begin(), idx.end());
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(points[i]);
  return out;
}

std::unique_ptr<EncoderPass> forward(const EncoderModel& model, std::span<const Vec3> points) {
  if (points.empty()) throw std::invalid_argument("encoder: empty sequence");
  if (points.size() > static_cast<std::size_t>(model.config().max_seq_len))
    throw std::invalid_argument("encoder: sequence longer than max_seq_len");
  return model.config().arch == Arch::Attention ? detail::attention_forward(model, points)
                                                : detail::recurrent_forward(model, points);
}

Embedding embed(const EncoderModel& model, std::span<const Vec3> points) {
  const auto tokens = subsample(points, model.config().max_seq_len, model.meta.seed);
  return forward(model, tokens)->output();
}

Embedding embed(const EncoderModel& model, const TapSequence& seq) { return embed(model, seq.points); }

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = std::sqrt(simd::dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(simd::dot(b.data(), b.data(), b.size()));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return simd::dot(a.data(), b.data(), a.size()) / (na * nb);
}

IdentifyResult identify_embeddings(const Embedding& reference, const std::vector<Embedding>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("identify: no candidates");
  IdentifyResult r;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s =
        candidates[i].empty() ? -std::numeric_limits<double>::infinity() : cosine(reference, candidates[i]);
    r.similarities.push_back(s);
    if (s > best) {
      best = s;
      r.index = i;
    }
  }
  return r;
}

IdentifyResult identify(const EncoderModel& model, const TapSequence& reference,
                        const std::vector<TapSequence>& candidates) {
  if (reference.empty()) throw std::invalid_argument("identify: empty reference sequence");
  if (candidates.empty()) throw std::invalid_argument("identify: no candidates");
  const Embedding ref = embed(model, reference);
  std::vector<Embedding> cands;
  cands.reserve(candidates.size());
  for (const auto& c : candidates) cands.push_back(c.empty() ? Embedding{} : embed(model, c));
  return identify_embeddings(ref, cands);
}

}  // namespace touchfetch
