#include "gfinn/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gfinn/error.hpp"

namespace gfinn {

using nlohmann::json;

namespace {

bool known_problem(const std::string& p) { return p == "gas" || p == "pendulum" || p == "langevin"; }

json layer_json(const LayerSpec& l) { return json{{"layers", l.layers}, {"width", l.width}}; }

// Reads typed fields out of a merged document, collecting every type error.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errs) : errs_(errs) {}

  template <class T>
  void get(const json& obj, const std::string& path, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    if constexpr (std::is_integral_v<T>) {
      if (!obj.at(key).is_number_integer()) {
        errs_.push_back(path + key + ": expected " + type_name<T>() + ", got " + obj.at(key).dump());
        return;
      }
    }
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      errs_.push_back(path + key + ": expected " + type_name<T>() + ", got " + obj.at(key).dump());
    }
  }

  void layer(const json& obj, const std::string& path, const std::string& key, LayerSpec& out) {
    if (!obj.contains(key)) return;
    get(obj.at(key), path + key + ".", "layers", out.layers);
    get(obj.at(key), path + key + ".", "width", out.width);
  }

 private:
  template <class T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else return "an array";
  }
  std::vector<std::string>& errs_;
};

// Overlays `doc` onto `base`, reporting keys the base does not have.
void merge(json& base, const json& doc, const std::string& path, std::vector<std::string>& errs) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!base.contains(it.key())) {
      errs.push_back("unknown key '" + path + it.key() + "'");
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge(slot, it.value(), path + it.key() + ".", errs);
    } else if (slot.is_object()) {
      errs.push_back(path + it.key() + ": expected an object, got " + it.value().dump());
    } else {
      slot = it.value();
    }
  }
}

void read_model(Reader& rd, const json& m, ModelSpec& spec) {
  rd.layer(m, "model.", "e", spec.e);
  rd.layer(m, "model.", "s", spec.s);
  rd.layer(m, "model.", "l", spec.l);
  rd.layer(m, "model.", "m", spec.m);
  rd.layer(m, "model.", "mu", spec.mu);
  rd.layer(m, "model.", "sigma", spec.sigma);
  rd.get(m, "model.", "k_l", spec.k_l);
  rd.get(m, "model.", "k_m", spec.k_m);
  rd.get(m, "model.", "spnn_lambda", spec.spnn_lambda);
  rd.get(m, "model.", "sdenet_noise_dim", spec.sdenet_noise_dim);
}

std::string join(const std::vector<std::string>& errs) {
  std::string msg = "invalid configuration (" + std::to_string(errs.size()) + " problem" +
                    (errs.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errs) msg += "\n  - " + e;
  return msg;
}

}  // namespace

ExperimentConfig preset(const std::string& problem, const std::string& method, const std::string& case_tag,
                        const std::string& scale) {
  if (!known_problem(problem)) throw ConfigError("unknown problem '" + problem + "' (expected gas, pendulum or langevin)");
  if (scale != "desk" && scale != "full") throw ConfigError("scale must be desk or full (got '" + scale + "')");
  const bool full = scale == "full";
  ExperimentConfig c;
  c.problem = problem;
  c.method = method;
  c.case_tag = method == "sdenet" || method == "analytic" ? "" : case_tag;
  c.scale = scale;
  c.model = default_model_spec(problem, method, case_tag);
  c.data.grid = make_problem(problem)->default_grid();
  if (problem == "langevin") {
    c.data.trajectories = 40;
    c.data.train = 40;
    c.train.iterations = full ? 50000 : 20000;
    c.train.batch_size = full ? 0 : 100;
    c.eval.samples = full ? 50000 : 5000;
    c.eval.steps = 500;
    c.eval.kde_times = {0.0, 0.5, 1.0, 2.0};
  } else {
    c.data.trajectories = full ? 100 : 25;
    c.data.train = full ? 80 : 20;
    c.train.iterations = full ? 500000 : 50000;
  }
  c.eval.sw_seed = 0x5357;
  if (method == "analytic") {
    // Reference run: no training, rollouts with the ground-truth integrator.
    c.train.iterations = 0;
    c.eval.order = 4;
    c.eval.substeps = c.data.generator.substeps;
  }
  return c;
}

json to_json(const ModelSpec& m) {
  return json{{"e", layer_json(m.e)},
              {"s", layer_json(m.s)},
              {"l", layer_json(m.l)},
              {"m", layer_json(m.m)},
              {"mu", layer_json(m.mu)},
              {"sigma", layer_json(m.sigma)},
              {"k_l", m.k_l},
              {"k_m", m.k_m},
              {"spnn_lambda", m.spnn_lambda},
              {"sdenet_noise_dim", m.sdenet_noise_dim}};
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"problem", c.problem},
      {"method", c.method},
      {"case", c.case_tag},
      {"scale", c.scale},
      {"seeds", c.seeds},
      {"threads", c.threads},
      {"model", to_json(c.model)},
      {"data",
       {{"trajectories", c.data.trajectories},
        {"train", c.data.train},
        {"t0", c.data.grid.t0},
        {"dt", c.data.grid.dt},
        {"steps", c.data.grid.steps},
        {"substeps", c.data.generator.substeps},
        {"sde_substeps", c.data.generator.sde_substeps},
        {"max_resample", c.data.generator.max_resample}}},
      {"train",
       {{"iterations", c.train.iterations},
        {"batch_size", c.train.batch_size},
        {"order", c.train.order},
        {"log_every", c.train.log_every},
        {"check_every", c.train.check_every},
        {"checkpoint_every", c.train.checkpoint_every},
        {"lr", c.train.adam.lr},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"eps", c.train.adam.eps}}},
      {"eval",
       {{"order", c.eval.order},
        {"substeps", c.eval.substeps},
        {"samples", c.eval.samples},
        {"steps", c.eval.steps},
        {"sw_directions", c.eval.sw_directions},
        {"sw_seed", c.eval.sw_seed},
        {"kde_times", c.eval.kde_times},
        {"kde_points", c.eval.kde_points}}},
  };
}

ExperimentConfig parse_config(const json& doc, const ConfigOverrides& over) {
  std::vector<std::string> errs;
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  Reader rd(errs);
  std::string problem = "gas", method = "gfinn", case_tag = "2a", scale = "desk";
  rd.get(doc, "", "problem", problem);
  rd.get(doc, "", "method", method);
  rd.get(doc, "", "case", case_tag);
  rd.get(doc, "", "scale", scale);
  if (over.scale) scale = *over.scale;
  if (!known_problem(problem)) errs.push_back("problem must be one of gas, pendulum, langevin (got '" + problem + "')");
  if (scale != "desk" && scale != "full") errs.push_back("scale must be desk or full (got '" + scale + "')");
  if (!errs.empty()) throw ConfigError(join(errs));

  ExperimentConfig c = preset(problem, method, case_tag, scale);
  json merged = to_json(c);
  merge(merged, doc, "", errs);
  merged["scale"] = scale;

  rd.get(merged, "", "seeds", c.seeds);
  rd.get(merged, "", "threads", c.threads);
  read_model(rd, merged["model"], c.model);
  const json& d = merged["data"];
  rd.get(d, "data.", "trajectories", c.data.trajectories);
  rd.get(d, "data.", "train", c.data.train);
  rd.get(d, "data.", "t0", c.data.grid.t0);
  rd.get(d, "data.", "dt", c.data.grid.dt);
  rd.get(d, "data.", "steps", c.data.grid.steps);
  rd.get(d, "data.", "substeps", c.data.generator.substeps);
  rd.get(d, "data.", "sde_substeps", c.data.generator.sde_substeps);
  rd.get(d, "data.", "max_resample", c.data.generator.max_resample);
  const json& t = merged["train"];
  rd.get(t, "train.", "iterations", c.train.iterations);
  rd.get(t, "train.", "batch_size", c.train.batch_size);
  rd.get(t, "train.", "order", c.train.order);
  rd.get(t, "train.", "log_every", c.train.log_every);
  rd.get(t, "train.", "check_every", c.train.check_every);
  rd.get(t, "train.", "checkpoint_every", c.train.checkpoint_every);
  rd.get(t, "train.", "lr", c.train.adam.lr);
  rd.get(t, "train.", "beta1", c.train.adam.beta1);
  rd.get(t, "train.", "beta2", c.train.adam.beta2);
  rd.get(t, "train.", "eps", c.train.adam.eps);
  const json& e = merged["eval"];
  rd.get(e, "eval.", "order", c.eval.order);
  rd.get(e, "eval.", "substeps", c.eval.substeps);
  rd.get(e, "eval.", "samples", c.eval.samples);
  rd.get(e, "eval.", "steps", c.eval.steps);
  rd.get(e, "eval.", "sw_directions", c.eval.sw_directions);
  rd.get(e, "eval.", "sw_seed", c.eval.sw_seed);
  rd.get(e, "eval.", "kde_times", c.eval.kde_times);
  rd.get(e, "eval.", "kde_points", c.eval.kde_points);
  c.model.method = c.method;
  c.model.case_tag = c.case_tag;

  if (over.seed) c.seeds = {*over.seed};
  if (over.threads) c.threads = *over.threads;
  for (auto& v : validate(c)) errs.push_back(std::move(v));
  if (!errs.empty()) throw ConfigError(join(errs));
  return c;
}

ModelSpec model_spec_from_json(const json& doc, const std::string& method, const std::string& case_tag) {
  std::vector<std::string> errs;
  ModelSpec spec;
  spec.method = method;
  spec.case_tag = case_tag;
  if (!doc.is_object()) throw ConfigError("model description must be a JSON object");
  Reader rd(errs);
  read_model(rd, doc, spec);
  if (!errs.empty()) throw ConfigError(join(errs));
  return spec;
}

ExperimentConfig load_config(const std::string& path, const ConfigOverrides& over) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + ex.what());
  }
  return parse_config(doc, over);
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> errs;
  if (!known_problem(c.problem)) {
    errs.push_back("problem must be one of gas, pendulum, langevin (got '" + c.problem + "')");
    return errs;
  }
  const auto problem = make_problem(c.problem);
  const bool stochastic = problem->stochastic();
  for (auto& v : validate_model_spec(*problem, c.model)) errs.push_back(std::move(v));
  if (c.scale != "desk" && c.scale != "full") errs.push_back("scale must be desk or full");
  if (c.seeds.empty()) errs.push_back("seeds must list at least one seed");
  if (c.threads < 1) errs.push_back("threads must be >= 1");

  const DataConfig& d = c.data;
  if (d.trajectories < 1) errs.push_back("data.trajectories must be >= 1");
  if (d.train < 1 || d.train > d.trajectories) errs.push_back("data.train must be in [1, data.trajectories]");
  if (!stochastic && d.train >= d.trajectories) errs.push_back("data.train must leave at least one held-out trajectory");
  if (!(d.grid.dt > 0.0) || !std::isfinite(d.grid.dt)) errs.push_back("data.dt must be positive");
  if (!std::isfinite(d.grid.t0)) errs.push_back("data.t0 must be finite");
  if (d.grid.steps < 1) errs.push_back("data.steps must be >= 1");
  if (d.generator.substeps < 1 || d.generator.sde_substeps < 1) errs.push_back("data substeps must be >= 1");
  if (d.generator.max_resample < 1) errs.push_back("data.max_resample must be >= 1");

  const TrainConfig& t = c.train;
  if (t.iterations < 0) errs.push_back("train.iterations must be >= 0");
  if (t.batch_size < 0) errs.push_back("train.batch_size must be >= 0 (0 = full batch)");
  if (t.order < 2 || t.order > 4) errs.push_back("train.order must be 2, 3 or 4");
  if (t.log_every < 1) errs.push_back("train.log_every must be >= 1");
  if (t.check_every < 1) errs.push_back("train.check_every must be >= 1");
  if (t.checkpoint_every < 0) errs.push_back("train.checkpoint_every must be >= 0");
  if (!(t.adam.lr > 0.0)) errs.push_back("train.lr must be positive");
  if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0) || !(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0)) {
    errs.push_back("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(t.adam.eps > 0.0)) errs.push_back("train.eps must be positive");

  const EvalConfig& e = c.eval;
  if (e.order != 0 && (e.order < 2 || e.order > 4)) errs.push_back("eval.order must be 0 (training order), 2, 3 or 4");
  if (e.substeps < 1) errs.push_back("eval.substeps must be >= 1");
  if (e.sw_directions < 1) errs.push_back("eval.sw_directions must be >= 1");
  if (e.kde_points < 2) errs.push_back("eval.kde_points must be >= 2");
  if (stochastic) {
    if (e.samples < 30) errs.push_back("eval.samples must be >= 30");
    if (e.steps < 1) errs.push_back("eval.steps must be >= 1");
    for (double tk : e.kde_times) {
      const double j = (tk - d.grid.t0) / d.grid.dt;
      if (!(j >= -1e-9 && j <= e.steps + 1e-9) || std::abs(j - std::round(j)) > 1e-6) {
        std::ostringstream os;
        os << "eval.kde_times entry " << tk << " is not a grid time in [t0, t0 + steps * dt]";
        errs.push_back(os.str());
      }
    }
  }
  return errs;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("threads");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

TrainOptions train_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainOptions o;
  o.iterations = cfg.train.iterations;
  o.batch_size = cfg.train.batch_size;
  o.order = cfg.train.order;
  o.log_every = cfg.train.log_every;
  o.check_every = cfg.train.check_every;
  o.seed = seed;
  o.threads = cfg.threads;
  o.adam = cfg.train.adam;
  o.checkpoint_every = cfg.train.checkpoint_every;
  return o;
}

}  // namespace gfinn
