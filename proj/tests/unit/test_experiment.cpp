#include "doctest.h"
#include "gfinn/error.hpp"
#include "gfinn/experiment.hpp"
#include "tmpdir.hpp"

using namespace gfinn;
using nlohmann::json;

namespace {

ExperimentConfig tiny(const std::string& problem, const std::string& method, const std::string& c) {
  json doc{{"problem", problem}, {"method", method}, {"case", c}, {"seeds", {0, 1}}};
  if (problem == "langevin") {
    doc["data"] = {{"trajectories", 4}, {"train", 4}, {"steps", 10}};
    doc["eval"] = {{"samples", 60}, {"steps", 20}, {"kde_times", {0.0, 0.04, 0.08}}, {"kde_points", 11}};
  } else {
    doc["data"] = {{"trajectories", 4}, {"train", 3}, {"steps", 10}};
  }
  doc["train"] = {{"iterations", 3}, {"batch_size", 8}};
  return parse_config(doc);
}

void run_all(const ExperimentConfig& cfg, const CommandOptions& opt) {
  cmd_generate(cfg, opt);
  cmd_train(cfg, opt);
  cmd_eval(cfg, opt);
  cmd_export(cfg, opt);
}

}  // namespace

TEST_CASE("deterministic pipeline writes every artifact with the config hash") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  std::vector<std::string> lines;
  opt.progress = [&](const std::string& l) { lines.push_back(l); };
  const ExperimentConfig cfg = tiny("gas", "gfinn", "1");
  const std::string hash = config_hash(cfg);
  run_all(cfg, opt);
  CHECK(!lines.empty());

  for (const char* f : {"dataset.json", "seed_1/train_run.json", "eval/report.json",
                        "export/manifest.json", "export/contours.json"}) {
    INFO(f);
    CHECK(read_json(tmp.path() / f)["config_hash"] == hash);
  }
  CHECK(read_json(tmp.path() / "seed_0/checkpoint.json")["meta"]["config_hash"] == hash);
  CHECK(read_text(tmp.path() / "seed_0/train_log.csv").rfind("iteration,loss,wall_ms\n0,", 0) == 0);
  const std::string band = read_text(tmp.path() / "export/mse_vs_time.csv");
  CHECK(band.rfind("t,min,mean,max\n0,0,0,0\n", 0) == 0);
  CHECK(std::count(band.begin(), band.end(), '\n') == 12);
  CHECK(read_text(tmp.path() / "eval/mse.csv").rfind("t,seed_0,seed_1\n", 0) == 0);
  CHECK(read_text(tmp.path() / "export/trajectories.csv").rfind("traj_id,t,source,z0,z1,z2,z3\n", 0) == 0);
  const json report = read_json(tmp.path() / "eval/report.json");
  CHECK(report["kind"] == "deterministic");
  CHECK(report["t"].size() == 11);
  CHECK(report["per_seed"].size() == 2);
  const json contours = read_json(tmp.path() / "export/contours.json");
  CHECK(contours["energy"]["truth"].size() == 41);
  CHECK(contours["entropy"]["plane"] == "q = 1, p = 0");
}

TEST_CASE("reruns reproduce metrics byte for byte") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = tiny("pendulum", "gfinn", "2a");
  run_all(cfg, opt);
  const std::string report = read_text(tmp.path() / "eval/report.json");
  const std::string ckpt = read_text(tmp.path() / "seed_1/checkpoint.json");
  const std::string band = read_text(tmp.path() / "export/mse_vs_time.csv");
  opt.overwrite = true;
  run_all(cfg, opt);
  CHECK(read_text(tmp.path() / "eval/report.json") == report);
  CHECK(read_text(tmp.path() / "seed_1/checkpoint.json") == ckpt);
  CHECK(read_text(tmp.path() / "export/mse_vs_time.csv") == band);
}

TEST_CASE("existing outputs are refused without overwrite") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = tiny("gas", "gfinn", "2a");
  run_all(cfg, opt);
  CHECK_THROWS_AS(cmd_generate(cfg, opt), IoError);
  CHECK_THROWS_AS(cmd_train(cfg, opt), IoError);
  CHECK_THROWS_AS(cmd_eval(cfg, opt), IoError);
  CHECK_THROWS_AS(cmd_export(cfg, opt), IoError);
}

TEST_CASE("command order and stale inputs") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = tiny("gas", "gfinn", "2a");
  CHECK_THROWS_AS(cmd_train(cfg, opt), IoError);  // no dataset yet
  cmd_generate(cfg, opt);
  CHECK_THROWS_AS(cmd_eval(cfg, opt), IoError);   // no checkpoint yet
  cmd_train(cfg, opt);
  CHECK_THROWS_AS(cmd_export(cfg, opt), IoError);  // no report yet

  json doc = to_json(cfg);
  doc["data"]["trajectories"] = 5;
  CHECK_THROWS_AS(cmd_train(parse_config(doc), opt), ConfigError);
  doc = to_json(cfg);
  doc["case"] = "2b";
  doc["model"] = to_json(default_model_spec("gas", "gfinn", "2b"));
  CHECK_THROWS_AS(cmd_eval(parse_config(doc), opt), ConfigError);  // checkpoints are for case 2a

  cmd_eval(cfg, opt);
  doc = to_json(cfg);
  doc["eval"]["kde_points"] = 7;
  CHECK_THROWS_AS(cmd_export(parse_config(doc), opt), ConfigError);  // report hash differs
}

TEST_CASE("periodic checkpoints") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  json doc = to_json(tiny("gas", "gfinn", "2a"));
  doc["seeds"] = {0};
  doc["train"]["iterations"] = 5;
  doc["train"]["checkpoint_every"] = 2;
  const ExperimentConfig cfg = parse_config(doc);
  cmd_generate(cfg, opt);
  cmd_train(cfg, opt);
  CHECK(read_json(tmp.path() / "seed_0/checkpoint_2.json")["meta"]["iterations"] == 2);
  CHECK(read_json(tmp.path() / "seed_0/checkpoint_4.json")["meta"]["iterations"] == 4);
  CHECK_FALSE(fs::exists(tmp.path() / "seed_0/checkpoint_6.json"));
  CHECK(read_json(tmp.path() / "seed_0/checkpoint.json")["meta"]["iterations"] == 5);
  CHECK(read_text(tmp.path() / "seed_0/losses.csv").rfind("iteration,loss\n0,", 0) == 0);
}

TEST_CASE("stochastic pipeline") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = tiny("langevin", "sdenet", "");
  run_all(cfg, opt);
  const json report = read_json(tmp.path() / "eval/report.json");
  CHECK(report["kind"] == "stochastic");
  CHECK(report["samples"] == 60);
  CHECK(report["t"].size() == 21);
  CHECK(report["band"]["mean"][0] == 0.0);
  const json kde = read_json(tmp.path() / "export/kde.json");
  CHECK(kde["truth"].size() == 3);
  CHECK(kde["pred"]["1"][2]["density"].size() == 11);
  CHECK(kde["truth"][0]["bandwidth"].size() == 2);
  CHECK(read_text(tmp.path() / "export/sw_vs_time.csv").rfind("t,min,mean,max\n0,0,0,0\n", 0) == 0);
}

TEST_CASE("exact gas model through the pipeline") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = parse_config(json{{"problem", "gas"}, {"method", "analytic"}});
  CHECK(cfg.eval.order == 4);
  CHECK(cfg.eval.substeps == 10);
  run_all(cfg, opt);
  const json report = read_json(tmp.path() / "eval/report.json");
  double worst = 0.0;
  for (const json& v : report["band"]["max"]) worst = std::max(worst, v.get<double>());
  CHECK(worst <= 1e-8);
  const json contours = read_json(tmp.path() / "export/contours.json");
  CHECK(contours["energy"]["a"].get<double>() == doctest::Approx(1.0));
  CHECK(contours["energy"]["residual"].get<double>() <= 1e-20);
}

TEST_CASE("verify command") {
  TmpDir tmp("exp");
  CommandOptions opt;
  opt.out = tmp.path();
  const ExperimentConfig cfg = parse_config(json{{"problem", "langevin"}});
  const std::string line = cmd_verify(cfg, opt);
  CHECK(line.find("1000/1000") != std::string::npos);
  const json rep = read_json(tmp.path() / "verify/report.json");
  CHECK(rep["passed"] == true);
  CHECK(rep["structure"].size() == 3);
  CHECK_THROWS_AS(cmd_verify(cfg, opt), IoError);
}
