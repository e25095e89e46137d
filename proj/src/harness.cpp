#include "touchfetch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include "touchfetch/rng.hpp"
#include "touchfetch/scene_io.hpp"

namespace touchfetch {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vec2 body_centroid(const Scene& s, std::size_t i) {
  const BodyState& b = s.body(i);
  return b.pose.to_world(b.shape.volume_centroid());
}

Vec2 perturbed(Vec2 c, double radius, Rng& rng) {
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double a = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return c + r * Vec2{std::cos(a), std::sin(a)};
}

// Reference sequence of one shape tapped alone at its known centre.
TapSequence reference_taps(const TrialContext& ctx, const ObjectShape& shape, TapVariant variant,
                           std::uint64_t seed) {
  GeneratedScene g = place_shapes({shape}, derive_seed(seed, {1}), ctx.scene);
  Rng rng(derive_seed(seed, {2}));
  return collect_taps(g.scene, body_centroid(g.scene, 0), ctx.tap, variant, rng);
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

}  // namespace

std::string_view experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Localize: return "localize";
    case ExperimentKind::Identify: return "identify";
    case ExperimentKind::Pipeline: return "pipeline";
    case ExperimentKind::AblateFriction: return "ablate_friction";
    case ExperimentKind::AblateStatic: return "ablate_static";
    case ExperimentKind::AblateInteraction: return "ablate_interaction";
    case ExperimentKind::AblateArch: return "ablate_arch";
  }
  return "localize";
}

ExperimentKind parse_experiment(std::string_view s) {
  for (auto k : {ExperimentKind::Localize, ExperimentKind::Identify, ExperimentKind::Pipeline,
                 ExperimentKind::AblateFriction, ExperimentKind::AblateStatic, ExperimentKind::AblateInteraction,
                 ExperimentKind::AblateArch})
    if (experiment_name(k) == s) return k;
  throw std::invalid_argument("unknown experiment: " + std::string(s));
}

void ExperimentConfig::validate() const {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  if (k < 1 || k > 5) throw std::invalid_argument("k must be in [1, 5]");
  if (ways < 1 || ways > 5) throw std::invalid_argument("ways must be in [1, 5]");
  if (method != "cluster" && method != "pf" && method != "both")
    throw std::invalid_argument("method must be cluster, pf or both");
  if (pf_particles < 100) throw std::invalid_argument("pf_particles must be >= 100");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (friction && !(*friction > 0.0)) throw std::invalid_argument("friction must be positive");
  if (mass && !(*mass > 0.0)) throw std::invalid_argument("mass must be positive");
  tap.validate(physics.finger_radius);
  if (experiment == ExperimentKind::AblateArch) {
    if (models.empty()) throw std::invalid_argument("ablate_arch needs at least one entry in models");
    for (const auto& [label, path] : models)
      if (!std::filesystem::exists(path)) throw std::invalid_argument("model not found: " + path.string());
  } else if (needs_model()) {
    if (model_path.empty()) throw std::invalid_argument(std::string(experiment_name(experiment)) + " needs a model");
    if (!std::filesystem::exists(model_path)) throw std::invalid_argument("model not found: " + model_path.string());
  }
  if (!static_model_path.empty() && !std::filesystem::exists(static_model_path))
    throw std::invalid_argument("model not found: " + static_model_path.string());
}

bool ExperimentConfig::needs_model() const { return experiment != ExperimentKind::Localize; }

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [label, path] : c.models) models[label] = path.string();
  nlohmann::json j{{"experiment", experiment_name(c.experiment)},
                   {"k", c.k},
                   {"ways", c.ways},
                   {"n_trials", c.n_trials},
                   {"seed", c.seed},
                   {"manifest_seed", c.manifest_seed},
                   {"static_mode", c.static_mode},
                   {"method", c.method},
                   {"pf_particles", c.pf_particles},
                   {"variant", variant_name(c.variant)},
                   {"model_path", c.model_path.string()},
                   {"models", models},
                   {"static_model", c.static_model_path.string()},
                   {"output_dir", c.output_dir.string()},
                   {"svg_samples", c.svg_samples},
                   {"threads", c.threads},
                   {"center_noise", c.center_noise},
                   {"physics", to_json(c.physics)},
                   {"tap",
                    {{"start_radius", c.tap.start_radius},
                     {"min_radius", c.tap.min_radius},
                     {"inward_step", c.tap.inward_step},
                     {"z_start", c.tap.z_start},
                     {"z_step", c.tap.z_step},
                     {"z_max", c.tap.z_max},
                     {"gamma", c.tap.gamma},
                     {"max_taps", c.tap.max_taps},
                     {"twist_per_level", c.tap.twist_per_level}}}};
  j["friction"] = c.friction ? nlohmann::json(*c.friction) : nlohmann::json(nullptr);
  j["mass"] = c.mass ? nlohmann::json(*c.mass) : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  if (j.contains("experiment")) c.experiment = parse_experiment(j.at("experiment").get<std::string>());
  c.k = j.value("k", c.k);
  c.ways = j.value("ways", c.ways);
  c.n_trials = j.value("n_trials", c.n_trials);
  c.seed = j.value("seed", c.seed);
  c.manifest_seed = j.value("manifest_seed", c.manifest_seed);
  if (j.contains("friction")) {
    if (j.at("friction").is_null()) c.friction.reset();
    else c.friction = j.at("friction").get<double>();
  }
  if (j.contains("mass")) {
    if (j.at("mass").is_null()) c.mass.reset();
    else c.mass = j.at("mass").get<double>();
  }
  c.static_mode = j.value("static_mode", c.static_mode);
  c.method = j.value("method", c.method);
  c.pf_particles = j.value("pf_particles", c.pf_particles);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("model_path")) c.model_path = j.at("model_path").get<std::string>();
  if (j.contains("static_model")) c.static_model_path = j.at("static_model").get<std::string>();
  if (j.contains("models"))
    for (const auto& [label, path] : j.at("models").items()) c.models[label] = path.get<std::string>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  c.svg_samples = j.value("svg_samples", c.svg_samples);
  c.threads = j.value("threads", c.threads);
  c.center_noise = j.value("center_noise", c.center_noise);
  if (j.contains("physics")) c.physics = physics_from_json(j.at("physics"), c.physics);
  if (j.contains("tap")) {
    const auto& t = j.at("tap");
    c.tap.start_radius = t.value("start_radius", c.tap.start_radius);
    c.tap.min_radius = t.value("min_radius", c.tap.min_radius);
    c.tap.inward_step = t.value("inward_step", c.tap.inward_step);
    c.tap.z_start = t.value("z_start", c.tap.z_start);
    c.tap.z_step = t.value("z_step", c.tap.z_step);
    c.tap.z_max = t.value("z_max", c.tap.z_max);
    c.tap.gamma = t.value("gamma", c.tap.gamma);
    c.tap.max_taps = t.value("max_taps", c.tap.max_taps);
    c.tap.twist_per_level = t.value("twist_per_level", c.tap.twist_per_level);
  }
  return c;
}

TrialRecord run_localize_trial(const TrialContext& ctx, int k, bool use_pf, int pf_particles, std::uint64_t seed,
                               LocalizationResult* detail) {
  const auto t0 = Clock::now();
  TrialRecord r;
  r.seed = seed;
  r.has_localization = true;
  GeneratedScene g = gen_scene(ctx.shapes, static_cast<std::size_t>(k), derive_seed(seed, {1}), ctx.scene);
  LocalizationResult loc = use_pf ? localize_pf(g.scene, k, pf_particles, derive_seed(seed, {3}))
                                  : localize_cluster(g.scene, k, 5.0, derive_seed(seed, {3}));
  r.loc_success = loc.success;
  r.loc_error = loc.center_error;
  r.perturbation = loc.perturbation;
  if (detail) *detail = std::move(loc);
  r.wall_time = seconds_since(t0);
  return r;
}

TrialRecord run_identify_trial(const TrialContext& ctx, const EncoderModel& model, int ways, TapVariant variant,
                               std::uint64_t seed) {
  const auto t0 = Clock::now();
  TrialRecord r;
  r.seed = seed;
  r.has_identification = true;
  GeneratedScene g = gen_scene(ctx.shapes, static_cast<std::size_t>(ways), derive_seed(seed, {1}), ctx.scene);
  Rng rng(derive_seed(seed, {4}));
  r.truth = static_cast<int>(pick(rng, g.scene.size()));
  const TapSequence ref =
      reference_taps(ctx, ctx.shapes[g.shape_indices[static_cast<std::size_t>(r.truth)]], variant, derive_seed(seed, {5}));
  std::vector<TapSequence> cands;
  for (std::size_t i = 0; i < g.scene.size(); ++i) {
    const Vec2 est = perturbed(body_centroid(g.scene, i), ctx.center_noise, rng);
    cands.push_back(collect_taps(g.scene, est, ctx.tap, variant, rng));
  }
  r.taps = static_cast<int>(cands[static_cast<std::size_t>(r.truth)].points.size());
  const bool any = std::any_of(cands.begin(), cands.end(), [](const TapSequence& s) { return !s.empty(); });
  if (!ref.empty() && any) {
    r.identified = static_cast<int>(identify(model, ref, cands).index);
    r.id_correct = r.identified == r.truth;
  }
  r.wall_time = seconds_since(t0);
  return r;
}

TrialRecord run_pipeline_trial(const TrialContext& ctx, const EncoderModel& model, int k, std::uint64_t seed,
                               LocalizationResult* detail) {
  const auto t0 = Clock::now();
  TrialRecord r;
  r.seed = seed;
  r.has_localization = r.has_identification = r.has_grasp = true;
  GeneratedScene g = gen_scene(ctx.shapes, static_cast<std::size_t>(k), derive_seed(seed, {1}), ctx.scene);
  Rng rng(derive_seed(seed, {4}));
  r.truth = static_cast<int>(pick(rng, g.scene.size()));
  const TapSequence ref = reference_taps(ctx, ctx.shapes[g.shape_indices[static_cast<std::size_t>(r.truth)]],
                                         TapVariant::Full, derive_seed(seed, {5}));

  LocalizationResult loc = localize_cluster(g.scene, k, 5.0, derive_seed(seed, {3}));
  r.loc_success = loc.success;
  r.loc_error = loc.center_error;
  r.perturbation = loc.perturbation;
  if (!loc.success) {
    if (detail) *detail = std::move(loc);
    r.wall_time = seconds_since(t0);
    return r;
  }
  const MatchResult match = match_centers(loc.estimate.centers, loc.truth, kLocalizationThreshold);

  std::vector<TapSequence> cands;
  for (Vec2 c : loc.estimate.centers) cands.push_back(collect_taps(g.scene, c, ctx.tap, TapVariant::Full, rng));
  const bool any = std::any_of(cands.begin(), cands.end(), [](const TapSequence& s) { return !s.empty(); });
  if (!ref.empty() && any) {
    const std::size_t chosen = identify(model, ref, cands).index;
    r.identified = match.assignment[chosen];
    r.id_correct = r.identified == r.truth;
    for (std::size_t j = 0; j < match.assignment.size(); ++j)
      if (match.assignment[j] == r.truth) r.taps = static_cast<int>(cands[j].points.size());
    const GraspResult gr = grasp(g.scene, cands[chosen].final_center, ctx.grasp);
    r.grasp_success = gr.success && gr.body_index == r.identified;
  }
  r.pipeline_success = r.loc_success && r.id_correct && r.grasp_success;
  if (detail) *detail = std::move(loc);
  r.wall_time = seconds_since(t0);
  return r;
}

const SummaryTable& ExperimentResult::table(const std::string& condition) const {
  for (const auto& [name, t] : tables)
    if (name == condition) return t;
  throw std::out_of_range("no condition named " + condition);
}

namespace {

struct Condition {
  std::string name;
  TrialContext ctx;
  TapVariant variant = TapVariant::Full;
  const EncoderModel* model = nullptr;
  bool localize = false;
  bool use_pf = false;
  bool identify = false;
  bool pipeline = false;
};

template <typename F>
void parallel_for(int n, int threads, F&& body) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

bool is_rate(const std::string& metric) {
  return metric == "loc_success" || metric == "id_accuracy" || metric == "grasp_success" ||
         metric == "pipeline_success";
}

std::vector<std::string> check_invariants(const ExperimentResult& res) {
  std::vector<std::string> out;
  for (const auto& r : res.trials)
    if (r.pipeline_success && !(r.loc_success && r.id_correct && r.grasp_success))
      out.push_back(r.condition + " trial " + std::to_string(r.trial) + ": pipeline success without every stage");
  for (const auto& [name, table] : res.tables) {
    for (const auto& [metric, s] : table.stats()) {
      if (is_rate(metric) && (s.mean < 0.0 || s.mean > 1.0))
        out.push_back(name + "/" + metric + ": rate outside [0, 1]");
      if (s.n >= 2 && !std::isfinite(s.se)) out.push_back(name + "/" + metric + ": non-finite standard error");
    }
    if (table.has("pipeline_success") && table.at("pipeline_success").n >= 200) {
      const auto& p = table.at("pipeline_success");
      for (const char* stage : {"loc_success", "id_accuracy", "grasp_success"}) {
        const auto& s = table.at(stage);
        // Stage rates here are conditional on earlier stages, so they bound
        // the pipeline rate from above as well.
        if (p.mean > s.mean + 3.0 * s.se + 1e-12)
          out.push_back(name + ": pipeline success exceeds " + std::string(stage) + " + 3 s.e.");
      }
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();

  // Load every model up front so a bad checkpoint fails before simulation.
  std::map<std::string, EncoderModel> models;
  if (cfg.experiment == ExperimentKind::AblateArch) {
    for (const auto& [label, path] : cfg.models) models.emplace(label, EncoderModel::load(path));
  } else if (cfg.needs_model()) {
    models.emplace("", EncoderModel::load(cfg.model_path));
  }
  if (cfg.experiment == ExperimentKind::AblateStatic && !cfg.static_model_path.empty())
    models.emplace("static", EncoderModel::load(cfg.static_model_path));
  const EncoderModel* main_model = models.count("") ? &models.at("") : nullptr;

  const SplitManifest manifest = SplitManifest::make(cfg.manifest_seed);
  TrialContext base;
  for (int id : manifest.validation_ids) base.shapes.push_back(manifest.shape(id));
  base.scene.static_mode = cfg.static_mode;
  base.scene.physics = cfg.physics;
  if (cfg.friction) base.scene.friction = *cfg.friction;
  if (cfg.mass) base.scene.mass = *cfg.mass;
  base.tap = cfg.tap;
  base.grasp = cfg.grasp;
  base.center_noise = cfg.center_noise;

  std::vector<Condition> conds;
  auto add = [&](std::string name, TrialContext ctx) {
    Condition c;
    c.name = std::move(name);
    c.ctx = std::move(ctx);
    c.variant = cfg.variant;
    c.model = main_model;
    conds.push_back(std::move(c));
    return &conds.back();
  };
  switch (cfg.experiment) {
    case ExperimentKind::Localize:
      if (cfg.method != "pf") add("cluster", base)->localize = true;
      if (cfg.method != "cluster") {
        auto* c = add("pf", base);
        c->localize = c->use_pf = true;
      }
      break;
    case ExperimentKind::Identify: add("identify", base)->identify = true; break;
    case ExperimentKind::Pipeline: add("pipeline", base)->pipeline = true; break;
    case ExperimentKind::AblateFriction:
      for (double mu : {0.5, 0.25, 0.1}) {
        TrialContext ctx = base;
        ctx.scene.friction = mu;
        char name[32];
        std::snprintf(name, sizeof name, "mu=%.2f", mu);
        auto* c = add(name, ctx);
        c->localize = c->identify = true;
      }
      break;
    case ExperimentKind::AblateStatic:
      for (bool st : {false, true}) {
        TrialContext ctx = base;
        ctx.scene.static_mode = st;
        auto* c = add(st ? "static" : "moving", ctx);
        c->identify = true;
        if (st && models.count("static")) c->model = &models.at("static");
      }
      break;
    case ExperimentKind::AblateInteraction:
      for (TapVariant v : {TapVariant::Full, TapVariant::NoReloc, TapVariant::Noisy}) {
        auto* c = add(std::string(variant_name(v)), base);
        c->variant = v;
        c->identify = true;
      }
      break;
    case ExperimentKind::AblateArch:
      for (const auto& [label, m] : models) {
        auto* c = add(label, base);
        c->model = &m;
        c->identify = true;
      }
      break;
  }

  ExperimentResult res;
  std::vector<std::vector<LocalizationResult>> samples(conds.size());
  for (std::size_t ci = 0; ci < conds.size(); ++ci) {
    const Condition& c = conds[ci];
    std::vector<TrialRecord> recs(static_cast<std::size_t>(cfg.n_trials));
    const int n_svg = std::min(cfg.svg_samples, cfg.n_trials);
    samples[ci].resize(static_cast<std::size_t>(std::max(n_svg, 0)));
    parallel_for(cfg.n_trials, cfg.threads, [&](int t) {
      // Every condition sees the same trial seeds.
      const std::uint64_t seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(t)});
      LocalizationResult* detail = t < n_svg ? &samples[ci][static_cast<std::size_t>(t)] : nullptr;
      TrialRecord r;
      if (c.pipeline) {
        r = run_pipeline_trial(c.ctx, *c.model, cfg.k, seed, detail);
      } else {
        if (c.localize) r = run_localize_trial(c.ctx, cfg.k, c.use_pf, cfg.pf_particles, seed, detail);
        if (c.identify) {
          const TrialRecord id = run_identify_trial(c.ctx, *c.model, cfg.ways, c.variant, derive_seed(seed, {9}));
          r.seed = seed;
          r.has_identification = true;
          r.identified = id.identified;
          r.truth = id.truth;
          r.id_correct = id.id_correct;
          r.taps = id.taps;
          r.wall_time += id.wall_time;
        }
      }
      r.condition = c.name;
      r.trial = t;
      recs[static_cast<std::size_t>(t)] = std::move(r);
    });
    res.tables.emplace_back(c.name, summarize_trials(recs));
    res.trials.insert(res.trials.end(), recs.begin(), recs.end());
  }
  res.violations = check_invariants(res);
  res.wall_time = seconds_since(t0);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream(cfg.output_dir / "trials.csv", std::ios::binary) << trials_csv(res.trials);
    write_json_file(cfg.output_dir / "summary.json", summary_json(cfg, res));
    for (std::size_t ci = 0; ci < conds.size(); ++ci)
      for (std::size_t t = 0; t < samples[ci].size(); ++t)
        if (!samples[ci][t].truth.empty()) {
          const std::string stem = conds[ci].name + "_" + std::to_string(t);
          std::ofstream(cfg.output_dir / ("localization_" + stem + ".svg"))
              << render_localization_svg(samples[ci][t], base.scene.bin_side);
          std::ofstream(cfg.output_dir / ("grid_" + stem + ".txt")) << samples[ci][t].grid.to_ascii();
          write_json_file(cfg.output_dir / ("grid_" + stem + ".json"), samples[ci][t].grid.to_json());
        }
    const auto& first = res.tables.front().second;
    for (const char* metric : {"loc_success", "id_accuracy", "pipeline_success"})
      if (first.has(metric))
        std::ofstream(cfg.output_dir / (std::string(metric) + ".svg")) << render_metric_svg(res.tables, metric);
  }
  return res;
}

}  // namespace touchfetch
