#include "gfinn/experiment.hpp"

#include <cmath>
#include <sstream>

#include "gfinn/error.hpp"
#include "gfinn/metrics.hpp"
#include "gfinn/verify.hpp"

namespace gfinn {

using nlohmann::json;

namespace {

std::uint64_t data_seed(const ExperimentConfig& cfg) { return cfg.seeds.front(); }

void say(const CommandOptions& opt, const std::string& line) {
  if (opt.progress) opt.progress(line);
}

json header(const ExperimentConfig& cfg) {
  return json{{"config_hash", config_hash(cfg)},
              {"problem", cfg.problem},
              {"method", cfg.method},
              {"case", cfg.case_tag},
              {"scale", cfg.scale}};
}

std::vector<double> times(const TimeGrid& g, int steps) {
  std::vector<double> t(static_cast<std::size_t>(steps + 1));
  for (int j = 0; j <= steps; ++j) t[static_cast<std::size_t>(j)] = g.t0 + j * g.dt;
  return t;
}

// JSON arrays store NaN as null.
std::vector<double> numbers(const json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const json& v : arr) out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  return out;
}

DatasetFile load_matching_dataset(const ExperimentConfig& cfg, const CommandOptions& opt) {
  DatasetFile ds = read_dataset(dataset_path(opt));
  const DataConfig& d = cfg.data;
  std::vector<std::string> diffs;
  if (ds.set.problem != cfg.problem) diffs.push_back("problem '" + ds.set.problem + "'");
  if (ds.set.size() != d.trajectories) diffs.push_back(std::to_string(ds.set.size()) + " trajectories");
  if (ds.set.grid.dt != d.grid.dt || ds.set.grid.steps != d.grid.steps || ds.set.grid.t0 != d.grid.t0) {
    diffs.push_back("a different time grid");
  }
  if (ds.set.seed != data_seed(cfg)) diffs.push_back("seed " + std::to_string(ds.set.seed));
  if (ds.sidecar.value("split", json::object()).value("train", -1) != d.train) diffs.push_back("a different split");
  if (!diffs.empty()) {
    std::string msg = "dataset " + dataset_path(opt).string() + " does not match the configuration (it has";
    for (std::size_t i = 0; i < diffs.size(); ++i) msg += (i ? ", " : " ") + diffs[i];
    throw ConfigError(msg + "); rerun generate");
  }
  return ds;
}

Checkpoint load_seed_checkpoint(const ExperimentConfig& cfg, const CommandOptions& opt, std::uint64_t seed) {
  const fs::path p = seed_dir(opt, seed) / "checkpoint.json";
  if (!fs::exists(p)) throw IoError("missing checkpoint " + p.string() + "; run train first");
  Checkpoint ck = load_checkpoint(read_json(p));
  const ModelSpec& s = ck.model->spec();
  if (ck.model->problem().name() != cfg.problem || s.method != cfg.model.method || s.case_tag != cfg.model.case_tag) {
    throw ConfigError("checkpoint " + p.string() + " is for a different problem, method or case");
  }
  return ck;
}

int train_order(const Checkpoint& ck, const ExperimentConfig& cfg) { return ck.meta.value("order", cfg.train.order); }
int eval_order(const Checkpoint& ck, const ExperimentConfig& cfg) {
  return cfg.eval.order > 0 ? cfg.eval.order : train_order(ck, cfg);
}

// Kernel density grid of the (q, p) marginal.
json kde_json(const Matrix& states, int points) {
  const Kde2 k = kde(Matrix(states.topRows(2)), points, points);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(k.x.size()));
  for (Index i = 0; i < k.x.size(); ++i)
    for (Index j = 0; j < k.y.size(); ++j) rows[static_cast<std::size_t>(i)].push_back(k.density(i, j));
  return json{{"x", std::vector<double>(k.x.data(), k.x.data() + k.x.size())},
              {"y", std::vector<double>(k.y.data(), k.y.data() + k.y.size())},
              {"bandwidth", {k.bandwidth_x, k.bandwidth_y}},
              {"density", rows}};
}

struct Plane {
  std::string name, x_label, y_label;
  int ix, iy;
  double x0, x1, y0, y1;
  Vector base;
};

// Calibrated learned scalar against the truth on a plane of states.
json contour(const GenericModel& model, const Plane& pl, bool energy, int points) {
  const Problem& problem = model.problem();
  Matrix Z(pl.base.size(), points * points);
  const Vector xs = Vector::LinSpaced(points, pl.x0, pl.x1);
  const Vector ys = Vector::LinSpaced(points, pl.y0, pl.y1);
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < points; ++j) {
      Vector z = pl.base;
      z(pl.ix) = xs(i);
      z(pl.iy) = ys(j);
      Z.col(i * points + j) = z;
    }
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  const Var zv = tape.leaf(Z);
  const Vector truth = (energy ? problem.energy(zv) : problem.entropy(zv)).value().row(0).transpose();
  const Vector learned = (energy ? model.energy() : model.entropy()).value(ctx, zv).value().row(0).transpose();
  const AffineCalibration cal = calibrate(learned, truth);
  std::vector<std::vector<double>> t(static_cast<std::size_t>(points)), l(t.size());
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < points; ++j) {
      t[static_cast<std::size_t>(i)].push_back(truth(i * points + j));
      l[static_cast<std::size_t>(i)].push_back(cal.a * learned(i * points + j) + cal.b);
    }
  return json{{"plane", pl.name},
              {"x_label", pl.x_label},
              {"y_label", pl.y_label},
              {"x", std::vector<double>(xs.data(), xs.data() + xs.size())},
              {"y", std::vector<double>(ys.data(), ys.data() + ys.size())},
              {"truth", t},
              {"calibrated", l},
              {"a", cal.a},
              {"b", cal.b},
              {"residual", cal.residual},
              {"degenerate", cal.degenerate}};
}

std::string trajectories_csv(const TrajectorySet& truth, const TrajectorySet& pred) {
  std::string out = "traj_id,t,source";
  for (int i = 0; i < truth.d; ++i) out += ",z" + std::to_string(i);
  out += "\n";
  for (int k = 0; k < truth.size(); ++k) {
    for (const auto* set : {&truth, &pred}) {
      const Matrix& p = set->paths[static_cast<std::size_t>(k)];
      for (Index j = 0; j < p.cols(); ++j) {
        out += std::to_string(k) + "," + format_double(truth.grid.t0 + j * truth.grid.dt) + "," +
               (set == &truth ? "truth" : "pred");
        for (Index i = 0; i < p.rows(); ++i) out += "," + format_double(p(i, j));
        out += "\n";
      }
    }
  }
  return out;
}

}  // namespace

fs::path dataset_path(const CommandOptions& opt) { return opt.out / "dataset.csv"; }

fs::path seed_dir(const CommandOptions& opt, std::uint64_t seed) { return opt.out / ("seed_" + std::to_string(seed)); }

std::string cmd_generate(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path csv = dataset_path(opt);
  ensure_absent({csv, sidecar_path(csv)}, opt.overwrite);
  const auto problem = make_problem(cfg.problem);
  say(opt, "generating " + std::to_string(cfg.data.trajectories) + " " + cfg.problem + " trajectories");
  const TrajectorySet set =
      generate_dataset(*problem, cfg.data.trajectories, cfg.data.grid, data_seed(cfg), cfg.data.generator);
  json extra = header(cfg);
  extra.erase("method");
  extra.erase("case");
  extra["generator"] = problem->stochastic()
                           ? json{{"solver", "euler-maruyama"}, {"substeps", cfg.data.generator.sde_substeps}}
                           : json{{"solver", "rk4"}, {"substeps", cfg.data.generator.substeps}};
  extra["generator"]["max_resample"] = cfg.data.generator.max_resample;
  extra["split"] = {{"train", cfg.data.train}, {"test", cfg.data.trajectories - cfg.data.train}};
  write_dataset(csv, set, extra);
  return "wrote " + csv.string() + " (" + std::to_string(set.size()) + " trajectories, " +
         std::to_string(cfg.data.train) + " train)";
}

std::string cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const DatasetFile ds = load_matching_dataset(cfg, opt);
  const TrajectorySet train_set = ds.set.subset(0, cfg.data.train);
  std::vector<fs::path> outputs;
  for (auto seed : cfg.seeds) {
    const fs::path dir = seed_dir(opt, seed);
    for (const char* f : {"checkpoint.json", "train_log.csv", "losses.csv", "train_run.json"}) outputs.push_back(dir / f);
    if (cfg.train.checkpoint_every > 0) {
      for (long it = cfg.train.checkpoint_every; it < cfg.train.iterations; it += cfg.train.checkpoint_every) {
        outputs.push_back(dir / ("checkpoint_" + std::to_string(it) + ".json"));
      }
    }
  }
  ensure_absent(outputs, opt.overwrite);

  const std::string hash = config_hash(cfg);
  std::shared_ptr<const Problem> problem = make_problem(cfg.problem);
  std::ostringstream summary;
  summary << "trained " << cfg.seeds.size() << " seed(s); final loss";
  for (auto seed : cfg.seeds) {
    const fs::path dir = seed_dir(opt, seed);
    auto model = build_model(problem, cfg.model);
    model->init(seed);
    TrainOptions to = train_options(cfg, seed);
    const std::string tag = "seed " + std::to_string(seed);
    to.on_log = [&](const LogRow& r) {
      say(opt, tag + " iteration " + std::to_string(r.iteration) + " loss " + format_double(r.loss));
    };
    auto meta = [&](long it) { return json{{"config_hash", hash}, {"iterations", it}, {"order", cfg.train.order}}; };
    to.on_checkpoint = [&](long it, const Model& m) {
      write_json(dir / ("checkpoint_" + std::to_string(it) + ".json"), checkpoint_json(m, seed, meta(it)));
    };
    const TrainRun run = train(*model, train_set, to);
    write_json(dir / "checkpoint.json", checkpoint_json(*model, seed, meta(cfg.train.iterations)));
    write_text(dir / "train_log.csv", log_csv(run.log));
    std::vector<std::vector<double>> rows;
    rows.reserve(run.losses.size());
    for (std::size_t i = 0; i < run.losses.size(); ++i) rows.push_back({static_cast<double>(i), run.losses[i]});
    write_text(dir / "losses.csv", table_csv({"iteration", "loss"}, rows));
    json rj = header(cfg);
    rj["seed"] = seed;
    rj["data_seed"] = data_seed(cfg);
    rj["iterations"] = cfg.train.iterations;
    rj["final_loss"] = run.final_loss;
    rj["max_degeneracy"] = run.max_degeneracy;
    rj["wall_ms"] = run.wall_ms;
    write_json(dir / "train_run.json", rj);
    summary << " " << tag << ": " << format_double(run.final_loss);
  }
  return summary.str();
}

std::string cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const DatasetFile ds = load_matching_dataset(cfg, opt);
  const fs::path dir = opt.out / "eval";
  const auto problem = make_problem(cfg.problem);
  const bool stochastic = problem->stochastic();
  std::vector<fs::path> outputs{dir / "report.json", dir / (stochastic ? "sw.csv" : "mse.csv"), dir / "train_loss.csv"};
  if (stochastic) outputs.push_back(dir / "kde.json");
  for (auto seed : cfg.seeds) {
    if (stochastic) continue;
    outputs.push_back(dir / ("pred_seed_" + std::to_string(seed) + ".csv"));
    outputs.push_back(sidecar_path(outputs.back()));
  }
  ensure_absent(outputs, opt.overwrite);

  const TrajectorySet train_set = ds.set.subset(0, cfg.data.train);
  const Batch train_batch = all_transitions(train_set);
  json report = header(cfg);
  report["seeds"] = cfg.seeds;
  report["data_seed"] = data_seed(cfg);
  std::vector<std::vector<double>> curves;
  json per_seed = json::object(), losses = json::object(), failed = json::object();
  std::vector<std::vector<double>> loss_rows;
  std::vector<double> t;

  if (!stochastic) {
    const TrajectorySet test = ds.set.subset(cfg.data.train, cfg.data.trajectories - cfg.data.train);
    t = times(test.grid, test.grid.steps);
    for (auto seed : cfg.seeds) {
      const Checkpoint ck = load_seed_checkpoint(cfg, opt, seed);
      const int order = eval_order(ck, cfg);
      say(opt, "seed " + std::to_string(seed) + ": rolling out " + std::to_string(test.size()) + " test trajectories");
      const TrajectorySet pred =
          rollout(*ck.model, test.initial_states(), test.grid, RolloutOptions{order, cfg.eval.substeps, true});
      curves.push_back(test_mse(test, pred));
      int bad = 0;
      for (const auto& p : pred.paths) bad += p.allFinite() ? 0 : 1;
      const std::string key = std::to_string(seed);
      per_seed[key] = curves.back();
      failed[key] = bad;
      const double loss = loss_value(*ck.model, train_batch, train_order(ck, cfg));
      losses[key] = loss;
      loss_rows.push_back({static_cast<double>(seed), loss});
      report["order"] = order;
      report["substeps"] = cfg.eval.substeps;
      json side = header(cfg);
      side["seed"] = seed;
      side["order"] = order;
      write_dataset(dir / ("pred_seed_" + key + ".csv"), pred, side);
    }
    report["kind"] = "deterministic";
    report["metric"] = "mse";
    report["failed_paths"] = failed;
  } else {
    Rng rng(derive_seed(data_seed(cfg), 0x6576));
    const Matrix z0 = problem->sample_initial(rng, cfg.eval.samples);
    const TimeGrid grid{cfg.data.grid.t0, cfg.data.grid.dt, cfg.eval.steps};
    t = times(grid, grid.steps);
    ModelSpec exact_spec;
    exact_spec.method = "analytic";
    exact_spec.case_tag.clear();
    const auto exact = build_model(make_problem(cfg.problem), exact_spec);
    say(opt, "simulating " + std::to_string(cfg.eval.samples) + " reference paths");
    const TrajectorySet truth = euler_maruyama(*exact, z0, grid, derive_seed(data_seed(cfg), 0x7472));
    std::vector<int> kde_steps;
    for (double tk : cfg.eval.kde_times) kde_steps.push_back(static_cast<int>(std::lround((tk - grid.t0) / grid.dt)));
    json kde_doc = header(cfg);
    kde_doc["marginal"] = {"q", "p"};
    kde_doc["times"] = cfg.eval.kde_times;
    kde_doc["truth"] = json::array();
    for (int j : kde_steps) kde_doc["truth"].push_back(kde_json(truth.states_at(j), cfg.eval.kde_points));
    kde_doc["pred"] = json::object();
    for (auto seed : cfg.seeds) {
      const Checkpoint ck = load_seed_checkpoint(cfg, opt, seed);
      say(opt, "seed " + std::to_string(seed) + ": simulating " + std::to_string(cfg.eval.samples) + " model paths");
      const TrajectorySet pred = euler_maruyama(*ck.model, z0, grid, derive_seed(seed, 0x7072));
      curves.push_back(sliced_w2_series(truth, pred, cfg.eval.sw_directions, cfg.eval.sw_seed));
      const std::string key = std::to_string(seed);
      per_seed[key] = curves.back();
      const double loss = loss_value(*ck.model, train_batch, train_order(ck, cfg));
      losses[key] = loss;
      loss_rows.push_back({static_cast<double>(seed), loss});
      json grids = json::array();
      for (int j : kde_steps) grids.push_back(kde_json(pred.states_at(j), cfg.eval.kde_points));
      kde_doc["pred"][key] = grids;
    }
    report["kind"] = "stochastic";
    report["metric"] = "sw";
    report["samples"] = cfg.eval.samples;
    report["sw_directions"] = cfg.eval.sw_directions;
    report["sw_seed"] = cfg.eval.sw_seed;
    report["kde_times"] = cfg.eval.kde_times;
    write_json(dir / "kde.json", kde_doc);
  }

  const Band band = aggregate(curves);
  report["t"] = t;
  report["per_seed"] = per_seed;
  report["band"] = {{"min", band.min}, {"mean", band.mean}, {"max", band.max}};
  report["train_loss"] = losses;
  write_json(dir / "report.json", report);

  std::vector<std::string> cols{"t"};
  for (auto seed : cfg.seeds) cols.push_back("seed_" + std::to_string(seed));
  std::vector<std::vector<double>> rows(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    rows[j].push_back(t[j]);
    for (const auto& c : curves) rows[j].push_back(c[j]);
  }
  write_text(dir / (stochastic ? "sw.csv" : "mse.csv"), table_csv(cols, rows));
  write_text(dir / "train_loss.csv", table_csv({"seed", "loss"}, loss_rows));

  const std::string metric = stochastic ? "sw" : "mse";
  double worst = 0.0;
  for (double v : band.max) worst = std::isnan(v) || std::isnan(worst) ? std::numeric_limits<double>::quiet_NaN() : std::max(worst, v);
  return "wrote " + (dir / "report.json").string() + " (max " + metric + " " + format_double(worst) + ")";
}

std::string cmd_export(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path eval_dir = opt.out / "eval";
  const fs::path dir = opt.out / "export";
  const json report = read_json(eval_dir / "report.json");
  if (report.value("config_hash", "") != config_hash(cfg)) {
    throw ConfigError("eval report was produced by a different configuration; rerun eval");
  }
  const bool stochastic = report.at("kind") == "stochastic";
  const std::string band_file = stochastic ? "sw_vs_time.csv" : "mse_vs_time.csv";
  std::vector<std::string> files{band_file};
  if (stochastic) files.push_back("kde.json");
  else files.push_back("trajectories.csv");
  const auto problem = make_problem(cfg.problem);
  const bool contours = cfg.problem == "gas" && cfg.method != "sdenet";
  if (contours) files.push_back("contours.json");
  std::vector<fs::path> outputs{dir / "manifest.json"};
  for (const auto& f : files) outputs.push_back(dir / f);
  ensure_absent(outputs, opt.overwrite);

  const std::vector<double> t = numbers(report.at("t"));
  const json& band = report.at("band");
  const auto lo = numbers(band.at("min")), mean = numbers(band.at("mean")), hi = numbers(band.at("max"));
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < t.size(); ++j) rows.push_back({t[j], lo[j], mean[j], hi[j]});
  write_text(dir / band_file, table_csv({"t", "min", "mean", "max"}, rows));

  const std::uint64_t first = cfg.seeds.front();
  if (stochastic) {
    write_json(dir / "kde.json", read_json(eval_dir / "kde.json"));
  } else {
    const DatasetFile ds = load_matching_dataset(cfg, opt);
    const TrajectorySet test = ds.set.subset(cfg.data.train, cfg.data.trajectories - cfg.data.train);
    const TrajectorySet pred = read_dataset(eval_dir / ("pred_seed_" + std::to_string(first) + ".csv")).set;
    write_text(dir / "trajectories.csv", trajectories_csv(test, pred));
  }
  if (contours) {
    const Checkpoint ck = load_seed_checkpoint(cfg, opt, first);
    const auto& gm = dynamic_cast<const GenericModel&>(*ck.model);
    Vector base_e(4), base_s(4);
    base_e << 1.0, 0.0, 2.5, 2.5;
    base_s << 1.0, 0.0, 2.5, 2.5;
    const Plane pe{"S1 = 2.5, S2 = 2.5", "q", "p", 0, 1, 0.2, 1.8, -1.5, 1.5, base_e};
    const Plane ps{"q = 1, p = 0", "S1", "S2", 2, 3, 1.5, 3.5, 1.5, 3.5, base_s};
    json doc = header(cfg);
    doc["seed"] = first;
    doc["energy"] = contour(gm, pe, true, 41);
    doc["entropy"] = contour(gm, ps, false, 41);
    write_json(dir / "contours.json", doc);
  }
  json manifest = header(cfg);
  manifest["files"] = files;
  manifest["seeds"] = cfg.seeds;
  write_json(dir / "manifest.json", manifest);
  return "wrote " + std::to_string(files.size() + 1) + " files to " + dir.string();
}

std::string cmd_verify(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path path = opt.out / "verify" / "report.json";
  ensure_absent({path}, opt.overwrite);
  json report = header(cfg);
  report.erase("method");
  report.erase("case");
  bool ok = true;
  say(opt, "structural invariants: 20 draws x 1000 states per method and case");
  json checks = json::array();
  for (const StructureCheck& c : structure_sweep(cfg.problem, 20, 1000, data_seed(cfg))) {
    checks.push_back({{"method", c.method},
                      {"case", c.case_tag},
                      {"draws", c.draws},
                      {"states", c.worst.states},
                      {"skew", c.worst.skew},
                      {"min_eig", c.worst.min_eig},
                      {"degeneracy_l", c.worst.degeneracy_l},
                      {"degeneracy_m", c.worst.degeneracy_m},
                      {"degeneracy_required", c.degeneracy_required},
                      {"passed", c.passed()}});
    ok = ok && c.passed();
  }
  report["structure"] = checks;
  say(opt, "kernel certificates: 1000 states");
  const CertificateSweep cs = certificate_sweep(cfg.problem, 1000, derive_seed(data_seed(cfg), 0x6365));
  report["certificates"] = {{"states", cs.states},
                            {"passed", cs.passed},
                            {"membership", cs.membership},
                            {"orthonormality", cs.orthonormality},
                            {"factorization", cs.factorization},
                            {"first_failure", cs.first_failure}};
  ok = ok && cs.ok();
  report["passed"] = ok;
  write_json(path, report);
  if (!ok) throw NumericalError("verification failed; see " + path.string());
  return "verified " + cfg.problem + ": " + std::to_string(checks.size()) + " method/case combinations and " +
         std::to_string(cs.passed) + "/" + std::to_string(cs.states) + " certificates pass";
}

}  // namespace gfinn
