// Acceptance run: builds the corpus, trains the encoders on matched budgets,
// runs every experiment and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "touchfetch/datasets.hpp"
#include "touchfetch/harness.hpp"
#include "touchfetch/losses.hpp"
#include "touchfetch/training.hpp"

using namespace touchfetch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Settings {
  fs::path work = "acceptance_work";
  int trials = 200;
  int threads = 1;
  bool reuse = false;
  std::uint64_t manifest_seed = 11;
  std::uint64_t corpus_seed = 3;
  std::uint64_t train_seed = 1;
  std::uint64_t trial_seed = 0;
};

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double x) { return fmt("%.1f%%", 100.0 * x); }
std::string pts(double x) { return fmt("%+.1f pts", 100.0 * x); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  failures += !pass;
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& s) {
  std::printf("  .. %s\n", s.c_str());
  std::fflush(stdout);
}

// Corpus under dir, built unless reusing an existing one.
void ensure_corpus(const Settings& s, const fs::path& dir, bool static_mode) {
  if (s.reuse && fs::exists(dir / "train.jsonl")) return;
  CorpusOptions o;
  o.seed = s.corpus_seed;
  o.scene.static_mode = static_mode;
  const auto t0 = Clock::now();
  const CorpusStats st = build_corpus(SplitManifest::make(s.manifest_seed), o, dir);
  note(dir.filename().string() + ": " + std::to_string(st.records) + " sequences in " + fmt("%.0f s", elapsed(t0)));
}

fs::path ensure_model(const Settings& s, const fs::path& corpus, const std::string& name, Arch arch,
                      LossKind loss) {
  const fs::path out = s.work / "models" / (name + ".json");
  if (s.reuse && fs::exists(out)) return out;
  fs::create_directories(out.parent_path());
  EncoderConfig cfg;
  cfg.arch = arch;
  cfg.loss = loss;
  TrainOptions o;
  o.seed = s.train_seed;
  const auto t0 = Clock::now();
  const EncoderModel m = train(read_jsonl(corpus / "train.jsonl"), cfg, o);
  m.save(out);
  const auto val = read_jsonl(corpus / "val.jsonl");
  note(name + ": trained in " + fmt("%.0f s", elapsed(t0)) + ", held-out 5-way " +
       pct(evaluate_identification(m, val, 5, 200, 7).accuracy()));
  return out;
}

ExperimentConfig base_config(const Settings& s, ExperimentKind kind, const std::string& tag) {
  ExperimentConfig c;
  c.experiment = kind;
  c.n_trials = s.trials;
  c.seed = s.trial_seed;
  c.manifest_seed = s.manifest_seed;
  c.threads = s.threads;
  c.svg_samples = 2;
  c.output_dir = s.work / "runs" / tag;
  return c;
}

ExperimentResult run(const ExperimentConfig& c, const std::string& tag) {
  const auto t0 = Clock::now();
  ExperimentResult r = run_experiment(c);
  note(tag + ": " + fmt("%.0f s", elapsed(t0)));
  std::cout << compare_methods(r.tables).text;
  for (const auto& v : r.violations) note("invariant violation: " + v);
  return r;
}

double mean(const ExperimentResult& r, const std::string& cond, const std::string& metric) {
  return r.table(cond).at(metric).mean;
}

// --- property checks ---------------------------------------------------------

std::vector<Vec3> random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-8.0, 8.0), z(0.0, 12.0);
  std::vector<Vec3> p(static_cast<std::size_t>(n));
  for (auto& v : p) v = {u(rng), u(rng), z(rng)};
  return p;
}

TrainBatch random_batch(std::uint64_t seed, int pairs, int max_len) {
  std::mt19937_64 rng(seed);
  TrainBatch b;
  for (int i = 0; i < pairs; ++i)
    for (int k = 0; k < 2; ++k) {
      b.sequences.push_back(random_points(rng, 3 + static_cast<int>(rng() % static_cast<unsigned>(max_len - 3))));
      b.object_ids.push_back(i);
    }
  return b;
}

template <class LossFn>
double worst_fd_error(EncoderModel& m, const std::vector<double>& analytic, LossFn loss, double h = 1e-4) {
  double worst = 0.0;
  auto p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss();
    p[i] = keep - h;
    const double down = loss();
    p[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

double gradient_check() {
  double worst = 0.0;
  for (Arch a : {Arch::Attention, Arch::Recurrent}) {
    EncoderModel m = EncoderModel::init(EncoderConfig::reduced(a), 7);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.05);
    for (double& p : m.params()) p += g(rng);
    const TrainBatch batch = random_batch(11, 3, m.config().max_seq_len);
    const LossValue nce = info_nce_loss(m, batch);
    worst = std::max(worst, worst_fd_error(m, nce.grad, [&] { return info_nce_loss(m, batch).loss; }));
    const std::vector<std::size_t> neg{2, 3, 4, 5, 0, 1};
    const LossValue tri = triplet_batch_loss(m, batch, neg);
    worst = std::max(worst, worst_fd_error(m, tri.grad, [&] { return triplet_batch_loss(m, batch, neg).loss; }));
  }
  return worst;
}

double uniform_logits_gap() {
  double worst = 0.0;
  for (int b : {2, 4, 16}) {
    std::vector<Embedding> z(static_cast<std::size_t>(2 * b), Embedding{0.6, 0.8, 0.0});
    worst = std::max(worst, std::abs(info_nce(z, 0.1) - std::log(2.0 * b - 1.0)));
  }
  return worst;
}

double worst_norm_error(const fs::path& model, const fs::path& corpus) {
  const EncoderModel m = EncoderModel::load(model);
  double worst = 0.0;
  for (const auto& seq : read_jsonl(corpus / "val.jsonl")) {
    if (seq.empty()) continue;
    double n = 0.0;
    for (double x : embed(m, seq)) n += x * x;
    worst = std::max(worst, std::abs(std::sqrt(n) - 1.0));
  }
  return worst;
}

bool kmeans_monotone() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> pts(40);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const KMeansResult r = kmeans(pts, 1 + trial % 5, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < r.objective.size(); ++i)
      if (r.objective[i] > r.objective[i - 1] + 1e-9) return false;
  }
  return true;
}

bool static_never_moves(const Settings& s) {
  const SplitManifest man = SplitManifest::make(s.manifest_seed);
  std::vector<ObjectShape> shapes;
  for (int id : man.validation_ids) shapes.push_back(man.shape(id));
  SceneOptions opts;
  opts.static_mode = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratedScene g = gen_scene(shapes, 3, seed, opts);
    localize_cluster(g.scene, 3, 5.0, seed);
    Rng rng(seed);
    for (std::size_t i = 0; i < g.scene.size(); ++i) {
      const Vec2 c = g.scene.body(i).pose.to_world(g.scene.body(i).shape.volume_centroid());
      collect_taps(g.scene, c, TapConfig{}, TapVariant::Full, rng);
      grasp(g.scene, c);
    }
    for (const auto& d : displacement_report(g.scene))
      if (d.distance != 0.0) return false;
  }
  return true;
}

double micro_step_gap() {
  double worst = 0.0;
  for (double mu : {0.5, 0.25, 0.1}) {
    Pose prev{};
    for (double step : {0.4, 0.2, 0.1, 0.05}) {
      BodyState b{.shape = make_box(10, 10, 10), .pose = {30, 30, 0}, .mass = 0.2, .friction = mu,
                  .initial_pose = {30, 30, 0}};
      Scene scene(60.0, {b}, false);
      Finger f{.id = 0, .position = {18, 30, 5}};
      move_finger(scene, f, {34, 30, 5}, step);
      const Pose p = scene.body(0).pose;
      if (step < 0.4) worst = std::max(worst, std::hypot(p.x - prev.x, p.y - prev.y));
      prev = p;
    }
  }
  return worst;
}

bool csv_rerun_identical(const Settings& s, const fs::path& model) {
  ExperimentConfig c = base_config(s, ExperimentKind::Pipeline, "determinism_a");
  c.n_trials = 20;
  c.model_path = model;
  run_experiment(c);
  ExperimentConfig d = c;
  d.output_dir = s.work / "runs" / "determinism_b";
  run_experiment(d);
  return slurp(c.output_dir / "trials.csv") == slurp(d.output_dir / "trials.csv");
}

bool corpus_regenerates(const Settings& s, const fs::path& corpus) {
  const fs::path again = s.work / "corpus_regen";
  fs::remove_all(again);
  CorpusOptions o;
  o.seed = s.corpus_seed;
  build_corpus(SplitManifest::make(s.manifest_seed), o, again);
  bool same = true;
  for (const char* f : {"train.jsonl", "val.jsonl", "manifest.json"})
    same = same && slurp(corpus / f) == slurp(again / f);
  fs::remove_all(again);
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Acceptance run over every criterion"};
  app.add_option("--work", s.work, "Working directory for corpora, models and runs");
  app.add_option("--trials", s.trials, "Trials per condition")->check(CLI::PositiveNumber);
  app.add_option("--threads", s.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--reuse", s.reuse, "Keep corpora and models from an earlier run");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  fs::create_directories(s.work);
  const fs::path corpus = s.work / "corpus", corpus_static = s.work / "corpus_static";
  ensure_corpus(s, corpus, false);
  ensure_corpus(s, corpus_static, true);
  const fs::path m_nce = ensure_model(s, corpus, "attention_infonce", Arch::Attention, LossKind::InfoNce);
  const fs::path m_tri = ensure_model(s, corpus, "attention_triplet", Arch::Attention, LossKind::Triplet);
  const fs::path m_rnn = ensure_model(s, corpus, "recurrent_infonce", Arch::Recurrent, LossKind::InfoNce);
  const fs::path m_static = ensure_model(s, corpus_static, "attention_infonce_static", Arch::Attention,
                                         LossKind::InfoNce);

  {
    ExperimentConfig c = base_config(s, ExperimentKind::Localize, "localize_k3");
    const ExperimentResult r = run(c, "localization, 3 objects");
    const double cl = mean(r, "cluster", "loc_success"), pf = mean(r, "pf", "loc_success");
    const double pert = mean(r, "cluster", "perturbation");
    report(1, cl >= pf + 0.15 && cl >= 0.85 && pert <= 2.5,
           "cluster " + pct(cl) + " vs particle filter " + pct(pf) + " (gap " + pts(cl - pf) +
               ", need >= +15 and cluster >= 85%); perturbation " + fmt("%.2f cm", pert) +
               " (<= 2.5); reference 91.3%, 1.7 cm");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::Localize, "localize_k1");
    c.k = 1;
    const ExperimentResult r = run(c, "localization, 1 object");
    const double cl = mean(r, "cluster", "loc_success"), pf = mean(r, "pf", "loc_success");
    report(2, std::abs(cl - pf) <= 0.10 && cl >= 0.90 && pf >= 0.90,
           "cluster " + pct(cl) + ", particle filter " + pct(pf) +
               " (within 10 pts, both >= 90%); reference 99.2% / 94.6%");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::Identify, "identify_5");
    c.model_path = m_nce;
    const double five = mean(run(c, "identification, 5-way"), "identify", "id_accuracy");
    c = base_config(s, ExperimentKind::Identify, "identify_3");
    c.model_path = m_nce;
    c.ways = 3;
    const double three = mean(run(c, "identification, 3-way"), "identify", "id_accuracy");
    report(3, five >= 0.50 && three >= 0.60,
           "5-way " + pct(five) + " (>= 50%), 3-way " + pct(three) + " (>= 60%); reference 69.8% 5-way");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::AblateInteraction, "ablate_interaction");
    c.model_path = m_nce;
    const ExperimentResult r = run(c, "interaction ablation");
    const double full = mean(r, "full", "id_accuracy"), norel = mean(r, "no_reloc", "id_accuracy"),
                 noisy = mean(r, "noisy", "id_accuracy");
    const double tf = mean(r, "full", "taps"), tn = mean(r, "no_reloc", "taps"), tz = mean(r, "noisy", "taps");
    report(4, full - norel >= 0.05 && full - noisy >= 0.05 && tf > tn && tf > tz,
           "full " + pct(full) + ", no_reloc " + pts(norel - full) + ", noisy " + pts(noisy - full) +
               " (each <= -5); taps " + fmt("%.1f", tf) + " / " + fmt("%.1f", tn) + " / " + fmt("%.1f", tz) +
               " (full highest); reference 228.4 > 183.8 > 157.1 taps");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::AblateArch, "ablate_arch");
    c.models = {{"infonce", m_nce}, {"triplet", m_tri}, {"recurrent", m_rnn}};
    const ExperimentResult r = run(c, "objective and architecture");
    const double nce = mean(r, "infonce", "id_accuracy"), tri = mean(r, "triplet", "id_accuracy"),
                 rnn = mean(r, "recurrent", "id_accuracy");
    report(5, nce - tri >= 0.08,
           "InfoNCE " + pct(nce) + " vs triplet " + pct(tri) + " (gap " + pts(nce - tri) +
               ", need >= +8); attention vs recurrent " + pct(nce) + " vs " + pct(rnn) + " (reported)" +
               "; reference 69.8% vs 52.3%");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::AblateStatic, "ablate_static");
    c.model_path = m_nce;
    c.static_model_path = m_static;
    const ExperimentResult r = run(c, "static vs moving");
    const double mv = mean(r, "moving", "id_accuracy"), st = mean(r, "static", "id_accuracy");
    report(6, st - mv >= 0.08,
           "static " + pct(st) + " vs moving " + pct(mv) + " (gap " + pts(st - mv) +
               ", need >= +8); reference 86.2% vs 69.8%");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::AblateFriction, "ablate_friction");
    c.model_path = m_nce;
    const ExperimentResult r = run(c, "friction sweep");
    const double l5 = mean(r, "mu=0.50", "loc_success"), l2 = mean(r, "mu=0.25", "loc_success"),
                 l1 = mean(r, "mu=0.10", "loc_success");
    const double i5 = mean(r, "mu=0.50", "id_accuracy"), i2 = mean(r, "mu=0.25", "id_accuracy"),
                 i1 = mean(r, "mu=0.10", "id_accuracy");
    const bool loc_ok = l5 > l2 && l2 > l1 && (l2 - l1) > (l5 - l2);
    const bool id_ok = i5 >= i2 && i2 >= i1 && i5 > i1 && (i5 - i1) < (l5 - l1);
    report(7, loc_ok && id_ok,
           "localization " + pct(l5) + " -> " + pct(l2) + " -> " + pct(l1) +
               " (strictly decreasing, last drop largest: " + (loc_ok ? "yes" : "no") + "); identification " +
               pct(i5) + " -> " + pct(i2) + " -> " + pct(i1) + " (monotone, smaller total drop: " +
               (id_ok ? "yes" : "no") + "); reference 69.8 -> 65.3 -> 53.8");
  }
  {
    ExperimentConfig c = base_config(s, ExperimentKind::Pipeline, "pipeline");
    c.model_path = m_nce;
    const ExperimentResult r = run(c, "full pipeline");
    const double p = mean(r, "pipeline", "pipeline_success");
    report(8, p >= 0.60 && r.violations.empty(),
           "end-to-end " + pct(p) + " over " + std::to_string(s.trials) + " trials (>= 60%); reference 76.8%");
  }
  {
    const double fd = gradient_check();
    const double ln = uniform_logits_gap();
    const double nrm = worst_norm_error(m_nce, corpus);
    const bool km = kmeans_monotone();
    const bool st = static_never_moves(s);
    const double micro = micro_step_gap();
    const bool csv = csv_rerun_identical(s, m_nce);
    const bool regen = corpus_regenerates(s, corpus);
    report(9, fd < 1e-4 && ln < 1e-9 && nrm <= 1e-6 && km && st && micro < 0.05 && csv && regen,
           "finite-difference " + fmt("%.1e", fd) + ", InfoNCE vs ln N " + fmt("%.1e", ln) + ", norm " +
               fmt("%.1e", nrm) + ", kmeans monotone " + (km ? "yes" : "no") + ", static still " +
               (st ? "yes" : "no") + ", micro-step " + fmt("%.4f cm", micro) + ", CSV rerun identical " +
               (csv ? "yes" : "no") + ", corpus regeneration identical " + (regen ? "yes" : "no"));
  }

  std::printf("acceptance: %d of 9 criteria passed in %.0f s\n", 9 - failures, elapsed(t0));
  return failures == 0 ? 0 : 1;
}
