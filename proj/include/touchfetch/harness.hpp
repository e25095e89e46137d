#pragma once

// Experiment orchestration: seeded trials over generated scenes, per-trial
// records, summary tables with standard errors, and comparison reports.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "touchfetch/datasets.hpp"
#include "touchfetch/encoder.hpp"
#include "touchfetch/interact.hpp"
#include "touchfetch/localize.hpp"

namespace touchfetch {

enum class ExperimentKind { Localize, Identify, Pipeline, AblateFriction, AblateStatic, AblateInteraction, AblateArch };

std::string_view experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(std::string_view s);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Localize;
  int k = 3;              // objects per scene (localize, pipeline)
  int ways = 5;           // objects per scene for identification
  int n_trials = 200;
  std::uint64_t seed = 0;
  std::uint64_t manifest_seed = 0;
  std::optional<double> friction;
  std::optional<double> mass;
  bool static_mode = false;
  std::string method = "both";  // localize: cluster, pf or both
  int pf_particles = 2000;
  TapVariant variant = TapVariant::Full;
  std::filesystem::path model_path;
  // ablate_arch: label -> checkpoint
  std::map<std::string, std::filesystem::path> models;
  // ablate_static: checkpoint for the static condition, trained on a static
  // corpus. Empty means the main model serves both conditions.
  std::filesystem::path static_model_path;
  std::filesystem::path output_dir;
  int svg_samples = 3;
  int threads = 1;
  PhysicsParams physics;
  TapConfig tap;
  GraspConfig grasp;
  // Radius of the uniform disc used to perturb true centres when an
  // identification trial starts without a localization stage.
  double center_noise = 3.0;

  void validate() const;
  bool needs_model() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Fields present in `j` override those of `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

struct TrialRecord {
  std::string condition;
  int trial = 0;
  std::uint64_t seed = 0;
  bool loc_success = false;
  double loc_error = 0.0;  // NaN when under-detected
  double perturbation = 0.0;
  int identified = -1;  // body index chosen by identification
  int truth = -1;       // target body index
  bool id_correct = false;
  int taps = 0;         // contact points in the target's query sequence
  bool grasp_success = false;
  bool pipeline_success = false;
  double wall_time = 0.0;  // seconds; kept out of the CSV
  // Which stages this trial exercised, for aggregation.
  bool has_localization = false;
  bool has_identification = false;
  bool has_grasp = false;
};

struct SummaryStat {
  double mean = 0.0;
  double se = 0.0;  // NaN when n < 2
  int n = 0;
};

class SummaryTable {
 public:
  void add(const std::string& metric, const std::vector<double>& samples);
  const std::map<std::string, SummaryStat>& stats() const { return stats_; }
  const SummaryStat& at(const std::string& metric) const;
  bool has(const std::string& metric) const { return stats_.count(metric) > 0; }
  nlohmann::json to_json() const;
  static SummaryTable from_json(const nlohmann::json& j);

 private:
  std::map<std::string, SummaryStat> stats_;
};

SummaryStat summarize(const std::vector<double>& samples);
SummaryTable summarize_trials(const std::vector<TrialRecord>& trials);

struct ExperimentResult {
  std::vector<TrialRecord> trials;                            // ordered by (condition, trial)
  std::vector<std::pair<std::string, SummaryTable>> tables;  // one per condition, in run order
  std::vector<std::string> violations;                       // failed invariant assertions
  double wall_time = 0.0;

  const SummaryTable& table(const std::string& condition) const;
};

// Shared pieces of a trial, built once per experiment.
struct TrialContext {
  std::vector<ObjectShape> shapes;  // candidate shapes for scenes
  SceneOptions scene;
  TapConfig tap;
  GraspConfig grasp;
  double center_noise = 3.0;
};

// Localization only.
TrialRecord run_localize_trial(const TrialContext& ctx, int k, bool use_pf, int pf_particles, std::uint64_t seed,
                               LocalizationResult* detail = nullptr);
// Identification among `ways` objects of one scene, starting from perturbed
// true centres.
TrialRecord run_identify_trial(const TrialContext& ctx, const EncoderModel& model, int ways, TapVariant variant,
                               std::uint64_t seed);
// Localization, identification against a reference collected in isolation,
// then a grasp at the identified centre.
TrialRecord run_pipeline_trial(const TrialContext& ctx, const EncoderModel& model, int k, std::uint64_t seed,
                               LocalizationResult* detail = nullptr);

// Runs the protocol, writes trials.csv, summary.json and SVGs under
// cfg.output_dir (when non-empty). Throws std::invalid_argument for a bad
// config or a missing model before any simulation.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string trials_csv(const std::vector<TrialRecord>& trials);
inline constexpr std::string_view kTrialsCsvHeader =
    "condition,trial,seed,loc_success,loc_error,perturbation,identified,truth,id_correct,taps,grasp_success,"
    "pipeline_success";
nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

// Aligned comparison of tables that share metric names; every column after
// the first carries its delta against the first. Throws std::invalid_argument
// on mismatched metrics.
struct ComparisonReport {
  std::string text;
  std::string csv;
};
ComparisonReport compare_methods(const std::vector<std::pair<std::string, SummaryTable>>& tables);

// Bar chart of one metric across conditions.
std::string render_metric_svg(const std::vector<std::pair<std::string, SummaryTable>>& tables,
                              const std::string& metric);
// Loss curve of a trained model.
std::string render_loss_svg(const std::vector<double>& curve);

}  // namespace touchfetch
