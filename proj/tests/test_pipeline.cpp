#include "doctest.h"
#include "support.hpp"

#include "luq/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

using namespace luq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_oscillator(const fs::path& out) {
  json j = json::parse(R"({
    "seed": 7,
    "experiment": {"name": "oscillator", "num_obs": 60, "num_pred": 150, "sigma": 0.25},
    "filter": {"time_start_idx": 0, "time_end_idx": 500, "num_filter_obs": 20, "tol": 0.05, "min_knots": 3, "max_knots": 8},
    "clustering": {"K": 2, "n_init": 3},
    "svm": {"k_folds": 3},
    "qoi": {"mode": "fixed", "n": 2},
    "density": {"grid_n": 200}
  })");
  j["output_dir"] = out.string();
  return j;
}

std::map<std::string, std::string> hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path().filename().string()] = file_hash(e.path());
  }
  return out;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("missing fields are reported together") {
  try {
    PipelineConfig::from_json(json::object());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* f : {"seed", "experiment", "filter", "clustering", "qoi"}) CHECK(msg.find(f) != std::string::npos);
  }
  json j = small_oscillator("x");
  j["filter"].erase("time_end_idx");
  j["clustering"].erase("K");
  try {
    PipelineConfig::from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("filter.time_end_idx") != std::string::npos);
    CHECK(msg.find("clustering.K") != std::string::npos);
  }
}

TEST_CASE("invalid values are config errors") {
  const auto bad = [](auto edit) {
    json j = small_oscillator("x");
    edit(j);
    CHECK_THROWS_AS(PipelineConfig::from_json(j), ConfigError);
  };
  bad([](json& j) { j["qoi"]["mode"] = "median"; });
  bad([](json& j) { j["qoi"]["n"] = 0; });
  bad([](json& j) { j["qoi"] = {{"mode", "rate"}, {"rate", 1.5}}; });
  bad([](json& j) { j["svm"]["proposals"] = json::array({{{"kernel", "laplace"}}}); });
  bad([](json& j) { j["experiment"]["name"] = "pendulum"; });
  bad([](json& j) { j["experiment"]["observed_law"] = "other"; });
  bad([](json& j) { j["clustering"]["K"] = 0; });
  bad([](json& j) { j["svm"]["k_folds"] = 1; });
  bad([](json& j) { j["seed"] = "seven"; });
  bad([](json& j) { j["inputs"] = json::object(); });
}

TEST_CASE("config hash ignores output_dir but not the seed") {
  const auto a = PipelineConfig::from_json(small_oscillator("one"));
  const auto b = PipelineConfig::from_json(small_oscillator("two"));
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  json j = small_oscillator("one");
  j["seed"] = 8;
  CHECK(PipelineConfig::from_json(j).hash() != a.hash());
  // semantic_json fills defaults and parses back to the same config
  const json sem = a.semantic_json();
  CHECK(!sem.contains("output_dir"));
  CHECK(PipelineConfig::from_json(sem).hash() == a.hash());
}

TEST_CASE("relative paths resolve against the base dir") {
  const auto cfg = PipelineConfig::from_json(small_oscillator("runs/a"), "/base");
  CHECK(cfg.output_dir == fs::path("/base/runs/a"));
}

TEST_CASE("stage names") {
  for (Stage s : all_stages()) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(all_stages().size() == 6);
  CHECK_THROWS_AS(stage_from_string("plot"), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(NumericalError("x")) == 3);
  CHECK(exit_code_for(MissingArtifactError("x")) == 4);
  CHECK(exit_code_for(FormatError("x")) == 4);
}

TEST_CASE("stages need their inputs") {
  test::TempDir dir("pipe_missing");
  const auto cfg = PipelineConfig::from_json(small_oscillator(dir.path()));
  std::ostringstream log;
  for (Stage s : {Stage::filter, Stage::dynamics, Stage::qoi, Stage::invert, Stage::metrics}) {
    CHECK_THROWS_AS(run_stage(s, cfg, log), MissingArtifactError);
  }
}

TEST_CASE("end to end run is reproducible") {
  test::TempDir one("pipe_a");
  test::TempDir two("pipe_b");
  std::ostringstream log;
  const auto c1 = PipelineConfig::from_json(small_oscillator(one.path()));
  const auto c2 = PipelineConfig::from_json(small_oscillator(two.path()));
  run_all(c1, log);
  run_all(c2, log);
  const auto h1 = hashes(one.path());
  CHECK(h1 == hashes(two.path()));
  for (const char* name : {"predicted.csv", "observed.csv", "filtered_predicted.csv", "labels_predicted.csv",
                           "classifier.json", "qoi.json", "ratios.csv", "accepted.csv", "tv_table.csv",
                           "densities.csv", "diagnostics.json", "manifest.json"}) {
    CHECK_MESSAGE(h1.count(name) == 1, name);
  }

  const json manifest = read_json_file(one / "manifest.json");
  CHECK(manifest.at("config_hash") == c1.hash());
  CHECK(manifest.at("stages").size() == 6);
  for (const auto& [stage, entry] : manifest.at("stages").items()) {
    for (const auto& [file, hash] : entry.at("outputs").items()) CHECK(hash == file_hash(one / file));
  }

  const json diag = read_json_file(one / "diagnostics.json");
  CHECK(diag.at("clusters").size() == 2);
  CHECK(diag.at("tv_table").size() == 2);
  double updated = 0.0;
  for (const auto& e : diag.at("events")) updated += e.at("updated").get<double>();
  CHECK(updated == doctest::Approx(1.0));
  for (const auto& t : diag.at("tv_table")) {
    CHECK(t.at("update").get<double>() >= 0.0);
    CHECK(t.at("half_l1_update").get<double>() <= 1.0);
  }
  const auto rows = test::read_text(one / "tv_table.csv");
  CHECK(rows.rfind("parameter,tv_initial,tv_update,tv_dg_exact\n", 0) == 0);

  // rerunning one stage leaves its artifacts unchanged
  run_stage(Stage::invert, c1, log);
  CHECK(file_hash(one / "ratios.csv") == h1.at("ratios.csv"));
}

TEST_CASE("external inputs reproduce the experiment") {
  test::TempDir gen("pipe_gen");
  test::TempDir ext("pipe_ext");
  std::ostringstream log;
  const auto base = PipelineConfig::from_json(small_oscillator(gen.path()));
  run_all(base, log);

  json j = small_oscillator(ext.path());
  j.erase("experiment");
  j["inputs"] = {{"predicted", "predicted.csv"},
                 {"observed", "observed.csv"},
                 {"predicted_params", "predicted_params.csv"},
                 {"observed_params", "observed_params.csv"},
                 {"parameters", read_json_file(gen / "distributions.json").at("parameters")}};
  const auto cfg = PipelineConfig::from_json(j, gen.path());
  run_all(cfg, log);
  for (const char* name : {"filtered_predicted.csv", "labels_predicted.csv", "labels_observed.csv", "ratios.csv",
                           "tv_table.csv", "distributions.json"}) {
    CHECK_MESSAGE(file_hash(gen / name) == file_hash(ext / name), name);
  }

  j["inputs"]["predicted"] = "nowhere.csv";
  const auto broken = PipelineConfig::from_json(j, gen.path());
  CHECK_THROWS_AS(run_stage(Stage::generate, broken, log), Error);
}

}  // TEST_SUITE
