// Command-line front end: data generation, training, evaluation and plots.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "touchfetch/datasets.hpp"
#include "touchfetch/harness.hpp"
#include "touchfetch/scene_io.hpp"
#include "touchfetch/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace touchfetch;

namespace {

constexpr int kExitViolations = 1;
constexpr int kExitError = 2;

json load_config(const std::string& path) { return path.empty() ? json::object() : read_json_file(path); }

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

// Flags shared by the evaluation subcommands.
struct EvalFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::uint64_t manifest_seed = 0;
  int trials = 200;
  int k = 3;
  int ways = 5;
  double mu = 0.0;
  double mass = 0.0;
  bool static_mode = false;
  std::string model;
  std::string static_model;
  std::string out;
  std::string method = "both";
  int particles = 2000;
  std::string variant = "full";
  int threads = 1;
  int svg_samples = 3;
  std::vector<std::string> models;  // label=path

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config; its fields override flags");
    app->add_option("--seed", seed, "Trial seed");
    app->add_option("--manifest-seed", manifest_seed, "Seed of the shape split");
    app->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
    app->add_option("--k", k, "Objects per scene");
    app->add_option("--ways", ways, "Objects per identification scene");
    app->add_option("--mu", mu, "Friction coefficient override");
    app->add_option("--mass", mass, "Object mass override");
    app->add_flag("--static", static_mode, "Freeze every object");
    app->add_option("--model", model, "Encoder checkpoint");
    app->add_option("--out", out, "Output directory");
    app->add_option("--threads", threads, "Worker threads");
    app->add_option("--svg-samples", svg_samples, "Localization figures per condition");
  }

  ExperimentConfig to_config(ExperimentKind kind, const CLI::App* app) const {
    ExperimentConfig c;
    c.experiment = kind;
    c.seed = seed;
    c.manifest_seed = manifest_seed;
    c.n_trials = trials;
    c.k = k;
    c.ways = ways;
    if (app->count("--mu")) c.friction = mu;
    if (app->count("--mass")) c.mass = mass;
    c.static_mode = static_mode;
    c.model_path = model;
    c.static_model_path = static_model;
    c.output_dir = out;
    c.method = method;
    c.pf_particles = particles;
    c.variant = parse_variant(variant);
    c.threads = threads;
    c.svg_samples = svg_samples;
    for (const auto& m : models) {
      const auto eq = m.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--models expects label=path, got " + m);
      c.models[m.substr(0, eq)] = m.substr(eq + 1);
    }
    return experiment_config_from_json(load_config(config), c);
  }
};

int run_eval(const ExperimentConfig& cfg) {
  const ExperimentResult res = run_experiment(cfg);
  std::cout << experiment_name(cfg.experiment) << ": " << cfg.n_trials << " trials per condition, "
            << res.wall_time << " s\n";
  try {
    const ComparisonReport rep = compare_methods(res.tables);
    std::cout << rep.text;
    if (!cfg.output_dir.empty()) {
      write_text(cfg.output_dir / "comparison.txt", rep.text);
      write_text(cfg.output_dir / "comparison.csv", rep.csv);
    }
  } catch (const std::invalid_argument&) {
    for (const auto& [name, t] : res.tables) std::cout << name << ' ' << t.to_json().dump() << '\n';
  }
  for (const auto& v : res.violations) std::cerr << "invariant violated: " << v << '\n';
  return res.violations.empty() ? 0 : kExitViolations;
}

// Tables from a summary.json, with condition names prefixed by `tag`.
std::vector<std::pair<std::string, SummaryTable>> tables_from_summary(const json& j, const std::string& tag) {
  std::vector<std::pair<std::string, SummaryTable>> out;
  for (const auto& c : j.at("conditions"))
    out.emplace_back(tag + c.at("condition").get<std::string>(), SummaryTable::from_json(c.at("metrics")));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"touchfetch: tactile localization, identification and retrieval"};
  app.require_subcommand(1);

  // gen-shapes
  auto* shapes_cmd = app.add_subcommand("gen-shapes", "Write the shape split and a sample scene");
  std::uint64_t shapes_seed = 0;
  int n_train = 120, n_val = 30, preview_k = 3;
  std::string shapes_out = "shapes", shapes_config;
  shapes_cmd->add_option("--seed", shapes_seed, "Manifest seed");
  shapes_cmd->add_option("--n-train", n_train, "Training shapes");
  shapes_cmd->add_option("--n-val", n_val, "Held-out shapes");
  shapes_cmd->add_option("--k", preview_k, "Objects in the sample scene");
  shapes_cmd->add_option("--out", shapes_out, "Output directory");
  shapes_cmd->add_option("--config", shapes_config, "JSON config; its fields override flags");

  // gen-corpus
  auto* corpus_cmd = app.add_subcommand("gen-corpus", "Collect tap sequences for every shape of the split");
  CorpusOptions corpus;
  std::uint64_t corpus_manifest_seed = 0;
  std::string corpus_out = "corpus", corpus_config, corpus_variant = "full";
  double corpus_mu = 0.5, corpus_mass = 0.2;
  bool corpus_static = false;
  corpus_cmd->add_option("--seed", corpus.seed, "Corpus seed");
  corpus_cmd->add_option("--manifest-seed", corpus_manifest_seed, "Manifest seed");
  corpus_cmd->add_option("--poses", corpus.poses_per_object, "Poses per object");
  corpus_cmd->add_option("--variant", corpus_variant, "Tapping variant: full, no_reloc or noisy");
  corpus_cmd->add_option("--mu", corpus_mu, "Friction coefficient");
  corpus_cmd->add_option("--mass", corpus_mass, "Object mass");
  corpus_cmd->add_flag("--static", corpus_static, "Freeze every object");
  corpus_cmd->add_option("--out", corpus_out, "Output directory");
  corpus_cmd->add_option("--config", corpus_config, "JSON config; its fields override flags");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train an encoder on a corpus");
  EncoderConfig enc;
  TrainOptions topts;
  std::string data_dir = "corpus", model_out = "model.json", train_config, arch = "attention", loss = "infonce",
              optimizer = "sgd";
  bool no_augment = false;
  train_cmd->add_option("--data", data_dir, "Corpus directory (train.jsonl, val.jsonl)");
  train_cmd->add_option("--arch", arch, "attention or recurrent");
  train_cmd->add_option("--loss", loss, "infonce or triplet");
  train_cmd->add_option("--epochs", topts.epochs, "Epochs");
  train_cmd->add_option("--batch", topts.batch_pairs, "Objects per batch");
  train_cmd->add_option("--lr", topts.learning_rate, "Learning rate");
  train_cmd->add_option("--optimizer", optimizer, "sgd or adam");
  train_cmd->add_option("--seed", topts.seed, "Training seed");
  train_cmd->add_flag("--no-augment", no_augment, "Disable random rotation augmentation");
  train_cmd->add_option("--out", model_out, "Checkpoint path");
  train_cmd->add_option("--config", train_config, "JSON config; its fields override flags");

  // evaluations
  EvalFlags loc_f, id_f, pipe_f, abl_f;
  auto* loc_cmd = app.add_subcommand("eval-localize", "Localization success, error and perturbation");
  loc_f.attach(loc_cmd);
  loc_cmd->add_option("--method", loc_f.method, "cluster, pf or both");
  loc_cmd->add_option("--particles", loc_f.particles, "Particle count");
  auto* id_cmd = app.add_subcommand("eval-identify", "Identification among held-out shapes");
  id_f.attach(id_cmd);
  id_cmd->add_option("--variant", id_f.variant, "Tapping variant: full, no_reloc or noisy");
  auto* pipe_cmd = app.add_subcommand("eval-pipeline", "Localize, identify and grasp");
  pipe_f.attach(pipe_cmd);
  auto* abl_cmd = app.add_subcommand("ablate", "Run an ablation");
  std::string ablation = "friction";
  abl_f.attach(abl_cmd);
  abl_cmd->add_option("--kind", ablation, "friction, static, interaction or arch")
      ->check(CLI::IsMember({"friction", "static", "interaction", "arch"}));
  abl_cmd->add_option("--models", abl_f.models, "label=checkpoint pairs for the arch ablation");
  abl_cmd->add_option("--static-model", abl_f.static_model, "Checkpoint for the static condition");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Compare summaries and render figures");
  std::vector<std::string> summaries;
  std::string plot_model, plot_out = "plots";
  plot_cmd->add_option("--summary", summaries, "summary.json files");
  plot_cmd->add_option("--model", plot_model, "Checkpoint whose loss curve to draw");
  plot_cmd->add_option("--out", plot_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*shapes_cmd) {
      const json j = load_config(shapes_config);
      shapes_seed = j.value("seed", shapes_seed);
      n_train = j.value("n_train", n_train);
      n_val = j.value("n_validation", n_val);
      preview_k = j.value("k", preview_k);
      if (j.contains("output_dir")) shapes_out = j.at("output_dir").get<std::string>();
      const SplitManifest m = SplitManifest::make(shapes_seed, n_train, n_val);
      fs::create_directories(shapes_out);
      write_json_file(fs::path(shapes_out) / "manifest.json", m.to_json());
      json all = json::array();
      std::vector<ObjectShape> val;
      for (const auto* ids : {&m.train_ids, &m.validation_ids})
        for (int id : *ids) {
          const ObjectShape s = m.shape(id);
          all.push_back({{"id", id}, {"family", family_name(family_of_id(id))}, {"shape", to_json(s)}});
          if (ids == &m.validation_ids) val.push_back(s);
        }
      write_json_file(fs::path(shapes_out) / "shapes.json", all);
      const GeneratedScene g = gen_scene(val, static_cast<std::size_t>(preview_k), derive_seed(shapes_seed, {7}));
      write_json_file(fs::path(shapes_out) / "scene.json", to_json(g.scene));
      std::cout << "wrote " << all.size() << " shapes to " << shapes_out << '\n';
      return 0;
    }

    if (*corpus_cmd) {
      const json j = load_config(corpus_config);
      corpus.seed = j.value("seed", corpus.seed);
      corpus_manifest_seed = j.value("manifest_seed", corpus_manifest_seed);
      corpus.poses_per_object = j.value("poses_per_object", corpus.poses_per_object);
      corpus.center_noise = j.value("center_noise", corpus.center_noise);
      corpus_variant = j.value("variant", corpus_variant);
      corpus_mu = j.value("friction", corpus_mu);
      corpus_mass = j.value("mass", corpus_mass);
      corpus_static = j.value("static_mode", corpus_static);
      if (j.contains("physics")) corpus.scene.physics = physics_from_json(j.at("physics"), corpus.scene.physics);
      if (j.contains("output_dir")) corpus_out = j.at("output_dir").get<std::string>();
      corpus.variant = parse_variant(corpus_variant);
      corpus.scene.friction = corpus_mu;
      corpus.scene.mass = corpus_mass;
      corpus.scene.static_mode = corpus_static;
      const auto t0 = std::chrono::steady_clock::now();
      const CorpusStats st = build_corpus(SplitManifest::make(corpus_manifest_seed), corpus, corpus_out);
      std::cout << "records " << st.records << ", redrawn " << st.redrawn << ", skipped " << st.skipped << ", "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
      return 0;
    }

    if (*train_cmd) {
      const json j = load_config(train_config);
      arch = j.value("arch", arch);
      loss = j.value("loss", loss);
      optimizer = j.value("optimizer", optimizer);
      topts.epochs = j.value("epochs", topts.epochs);
      topts.batch_pairs = j.value("batch_pairs", topts.batch_pairs);
      topts.learning_rate = j.value("learning_rate", topts.learning_rate);
      topts.seed = j.value("seed", topts.seed);
      no_augment = !j.value("augment_rotation", !no_augment);
      if (j.contains("data")) data_dir = j.at("data").get<std::string>();
      if (j.contains("output")) model_out = j.at("output").get<std::string>();
      enc.arch = parse_arch(arch);
      enc.loss = parse_loss(loss);
      if (j.contains("encoder")) {
        json e = to_json(enc);
        e.merge_patch(j.at("encoder"));
        enc = encoder_config_from_json(e);
      }
      topts.optimizer = parse_optimizer(optimizer);
      topts.augment_rotation = !no_augment;
      const auto t0 = std::chrono::steady_clock::now();
      topts.on_epoch = [&](int e, double l) {
        std::printf("epoch %3d  loss %.4f  %.1fs\n", e, l,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        std::fflush(stdout);
      };
      const auto data = read_jsonl(fs::path(data_dir) / "train.jsonl");
      const EncoderModel m = train(data, enc, topts);
      m.save(model_out);
      write_text(fs::path(model_out).replace_extension(".loss.svg"), render_loss_svg(m.meta.loss_curve));
      const fs::path val = fs::path(data_dir) / "val.jsonl";
      if (fs::exists(val)) {
        const auto vd = read_jsonl(val);
        for (int ways : {5, 3})
          std::printf("held-out %d-way accuracy %.3f\n", ways,
                      evaluate_identification(m, vd, ways, 200, derive_seed(topts.seed, {17})).accuracy());
      }
      return 0;
    }

    if (*loc_cmd) return run_eval(loc_f.to_config(ExperimentKind::Localize, loc_cmd));
    if (*id_cmd) return run_eval(id_f.to_config(ExperimentKind::Identify, id_cmd));
    if (*pipe_cmd) return run_eval(pipe_f.to_config(ExperimentKind::Pipeline, pipe_cmd));
    if (*abl_cmd) {
      const std::map<std::string, ExperimentKind> kinds{{"friction", ExperimentKind::AblateFriction},
                                                        {"static", ExperimentKind::AblateStatic},
                                                        {"interaction", ExperimentKind::AblateInteraction},
                                                        {"arch", ExperimentKind::AblateArch}};
      return run_eval(abl_f.to_config(kinds.at(ablation), abl_cmd));
    }

    if (*plot_cmd) {
      fs::create_directories(plot_out);
      std::vector<std::pair<std::string, SummaryTable>> tables;
      for (const auto& s : summaries) {
        auto t = tables_from_summary(read_json_file(s), summaries.size() > 1 ? fs::path(s).parent_path().filename().string() + "/" : "");
        tables.insert(tables.end(), t.begin(), t.end());
      }
      if (!tables.empty()) {
        try {
          const ComparisonReport rep = compare_methods(tables);
          std::cout << rep.text;
          write_text(fs::path(plot_out) / "comparison.txt", rep.text);
          write_text(fs::path(plot_out) / "comparison.csv", rep.csv);
        } catch (const std::invalid_argument& e) {
          std::cerr << "no comparison table: " << e.what() << '\n';
        }
        for (const auto& [metric, s] : tables.front().second.stats())
          write_text(fs::path(plot_out) / (metric + ".svg"), render_metric_svg(tables, metric));
      }
      if (!plot_model.empty())
        write_text(fs::path(plot_out) / "loss.svg", render_loss_svg(EncoderModel::load(plot_model).meta.loss_curve));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
