#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "touchfetch/harness.hpp"

using namespace touchfetch;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("touchfetch_harness_" + name);
  fs::remove_all(d);
  return d;
}

fs::path reduced_model(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "model.json";
  EncoderModel::init(EncoderConfig::reduced(Arch::Attention), 3).save(p);
  return p;
}

SummaryTable table_of(double a, double b) {
  SummaryTable t;
  t.add("x", {a, b});
  t.add("y", {1.0});
  return t;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("summary statistics use the sample standard error") {
    const SummaryStat s = summarize({1, 0, 1, 1});
    CHECK(s.n == 4);
    CHECK(s.mean == doctest::Approx(0.75));
    CHECK(s.se == doctest::Approx(0.25));
    const SummaryStat one = summarize({3.5});
    CHECK(one.mean == 3.5);
    CHECK(std::isnan(one.se));
  }

  TEST_CASE("summary table JSON round trip") {
    const SummaryTable t = table_of(0.5, 1.0);
    const SummaryTable u = SummaryTable::from_json(t.to_json());
    CHECK(u.at("x").mean == doctest::Approx(0.75));
    CHECK(u.at("x").n == 2);
    CHECK(std::isnan(u.at("y").se));
    CHECK_THROWS(t.at("missing"));
  }

  TEST_CASE("comparison of identical tables has zero deltas") {
    const ComparisonReport r = compare_methods({{"a", table_of(0.5, 1.0)}, {"b", table_of(0.5, 1.0)}});
    CHECK(r.text.find("+0.0000") != std::string::npos);
    CHECK(r.text.find("n/a") != std::string::npos);
    CHECK(r.csv.rfind("metric", 0) == 0);
    CHECK(r.csv == compare_methods({{"a", table_of(0.5, 1.0)}, {"b", table_of(0.5, 1.0)}}).csv);
  }

  TEST_CASE("comparison rejects mismatched metrics") {
    SummaryTable other;
    other.add("z", {1.0, 2.0});
    CHECK_THROWS_AS(compare_methods({{"a", table_of(0.5, 1.0)}, {"b", other}}), std::invalid_argument);
  }

  TEST_CASE("experiment names round trip") {
    for (auto k : {ExperimentKind::Localize, ExperimentKind::Identify, ExperimentKind::Pipeline,
                   ExperimentKind::AblateFriction, ExperimentKind::AblateStatic, ExperimentKind::AblateInteraction,
                   ExperimentKind::AblateArch})
      CHECK(parse_experiment(experiment_name(k)) == k);
    CHECK_THROWS(parse_experiment("nothing"));
  }

  TEST_CASE("config JSON overrides only the fields it names") {
    ExperimentConfig base;
    base.seed = 5;
    base.k = 3;
    const ExperimentConfig c = experiment_config_from_json(
        nlohmann::json::parse(R"({"k": 2, "n_trials": 7, "physics": {"kappa": 4.5}, "method": "cluster"})"), base);
    CHECK(c.k == 2);
    CHECK(c.n_trials == 7);
    CHECK(c.physics.kappa == 4.5);
    CHECK(c.physics.finger_radius == base.physics.finger_radius);
    CHECK(c.seed == 5);
    CHECK(c.method == "cluster");
    const ExperimentConfig d = experiment_config_from_json(to_json(c));
    CHECK(to_json(d) == to_json(c));
    CHECK_THROWS(experiment_config_from_json(nlohmann::json::parse(R"({"experiment": "bogus"})")));
  }

  TEST_CASE("a missing model fails before simulation") {
    ExperimentConfig c;
    c.experiment = ExperimentKind::Identify;
    c.n_trials = 2;
    c.model_path = "/nonexistent/model.json";
    CHECK_THROWS_AS(run_experiment(c), std::invalid_argument);
    c.n_trials = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    const fs::path d = scratch_dir("static_model");
    ExperimentConfig st;
    st.experiment = ExperimentKind::AblateStatic;
    st.model_path = reduced_model(d);
    st.static_model_path = d / "absent.json";
    CHECK_THROWS_AS(st.validate(), std::invalid_argument);
    fs::remove_all(d);
  }

  TEST_CASE("localization runs are byte identical and thread independent") {
    const fs::path a = scratch_dir("loc_a"), b = scratch_dir("loc_b");
    ExperimentConfig c;
    c.experiment = ExperimentKind::Localize;
    c.k = 2;
    c.n_trials = 6;
    c.seed = 21;
    c.method = "both";
    c.pf_particles = 300;
    c.svg_samples = 1;
    c.output_dir = a;
    const ExperimentResult r1 = run_experiment(c);
    c.output_dir = b;
    c.threads = 3;
    run_experiment(c);
    const std::string csv = slurp(a / "trials.csv");
    CHECK(csv == slurp(b / "trials.csv"));
    CHECK(csv.rfind(std::string(kTrialsCsvHeader), 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12);
    CHECK(r1.tables.size() == 2);
    CHECK(r1.table("cluster").at("loc_success").n == 6);
    const nlohmann::json s = nlohmann::json::parse(slurp(a / "summary.json"));
    for (const char* key : {"config", "conditions", "violations", "wall_time_s"}) CHECK(s.contains(key));
    bool svg = false, ascii = false;
    for (const auto& e : fs::directory_iterator(a)) {
      svg = svg || e.path().extension() == ".svg";
      ascii = ascii || e.path().extension() == ".txt";
    }
    CHECK(svg);
    CHECK(ascii);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("static scenes are never perturbed") {
    ExperimentConfig c;
    c.experiment = ExperimentKind::Localize;
    c.method = "cluster";
    c.n_trials = 4;
    c.static_mode = true;
    const ExperimentResult r = run_experiment(c);
    for (const auto& t : r.trials) CHECK(t.perturbation == 0.0);
  }

  TEST_CASE("pipeline records respect the success invariant") {
    const fs::path d = scratch_dir("pipe");
    ExperimentConfig c;
    c.experiment = ExperimentKind::Pipeline;
    c.n_trials = 5;
    c.seed = 2;
    c.model_path = reduced_model(d);
    const ExperimentResult r = run_experiment(c);
    CHECK(r.violations.empty());
    REQUIRE(r.trials.size() == 5);
    for (const auto& t : r.trials) {
      if (t.pipeline_success) CHECK((t.loc_success && t.id_correct && t.grasp_success));
      CHECK(t.has_localization);
      CHECK(t.has_grasp);
    }
    fs::remove_all(d);
  }

  TEST_CASE("ablation conditions share trial seeds") {
    const fs::path d = scratch_dir("ablate");
    ExperimentConfig c;
    c.experiment = ExperimentKind::AblateInteraction;
    c.n_trials = 3;
    c.model_path = reduced_model(d);
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.tables.size() == 3);
    CHECK(r.tables[0].first == "full");
    CHECK(r.tables[1].first == "no_reloc");
    CHECK(r.tables[2].first == "noisy");
    REQUIRE(r.trials.size() == 9);
    std::map<int, std::set<std::uint64_t>> seeds;
    for (const auto& t : r.trials) seeds[t.trial].insert(t.seed);
    for (const auto& [trial, s] : seeds) CHECK(s.size() == 1);
    fs::remove_all(d);
  }
}
