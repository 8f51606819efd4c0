#include "gfinn/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gfinn/config.hpp"
#include "gfinn/error.hpp"

namespace gfinn {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError("malformed number '" + s + "'");
  return v;
}

void ensure_absent(const std::vector<fs::path>& paths, bool overwrite) {
  if (overwrite) return;
  std::string existing;
  for (const auto& p : paths) {
    if (fs::exists(p)) existing += "\n  " + p.string();
  }
  if (!existing.empty()) throw IoError("refusing to overwrite existing output (pass --overwrite):" + existing);
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& ex) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + ex.what());
  }
}

// ---- datasets ----------------------------------------------------------------------

std::string dataset_csv(const TrajectorySet& set) {
  std::string out = "traj_id,t";
  for (int i = 0; i < set.d; ++i) out += ",z" + std::to_string(i);
  out += "\n";
  for (int k = 0; k < set.size(); ++k) {
    const Matrix& p = set.paths[static_cast<std::size_t>(k)];
    for (Index j = 0; j < p.cols(); ++j) {
      out += std::to_string(k) + "," + format_double(set.grid.t0 + static_cast<double>(j) * set.grid.dt);
      for (Index i = 0; i < p.rows(); ++i) out += "," + format_double(p(i, j));
      out += "\n";
    }
  }
  return out;
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const fs::path& csv, const TrajectorySet& set, const json& extra) {
  json side = extra;
  side["problem"] = set.problem;
  side["d"] = set.d;
  side["grid"] = {{"t0", set.grid.t0}, {"dt", set.grid.dt}, {"steps", set.grid.steps}};
  side["seed"] = set.seed;
  side["trajectories"] = set.size();
  write_text(csv, dataset_csv(set));
  write_json(sidecar_path(csv), side);
}

DatasetFile read_dataset(const fs::path& csv) {
  DatasetFile out;
  out.sidecar = read_json(sidecar_path(csv));
  TrajectorySet& s = out.set;
  try {
    s.problem = out.sidecar.at("problem").get<std::string>();
    s.d = out.sidecar.at("d").get<int>();
    const json& g = out.sidecar.at("grid");
    s.grid = TimeGrid{g.at("t0").get<double>(), g.at("dt").get<double>(), g.at("steps").get<int>()};
    s.seed = out.sidecar.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw IoError("dataset sidecar '" + sidecar_path(csv).string() + "' is incomplete: " + ex.what());
  }
  const int n = out.sidecar.value("trajectories", 0);
  if (s.d < 1 || s.grid.steps < 1 || n < 1) throw IoError("dataset sidecar has an empty shape");

  std::istringstream in(read_text(csv));
  std::string line;
  std::getline(in, line);
  std::string header = "traj_id,t";
  for (int i = 0; i < s.d; ++i) header += ",z" + std::to_string(i);
  if (line != header) throw IoError("dataset header '" + line + "' does not match '" + header + "'");

  const Index cols = s.grid.steps + 1;
  s.paths.assign(static_cast<std::size_t>(n), Matrix::Constant(s.d, cols, std::numeric_limits<double>::quiet_NaN()));
  long row = 0;
  const long expected = static_cast<long>(n) * cols;
  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string where = csv.string() + " line " + std::to_string(row + 2);
    cells.clear();
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    if (cells.size() != static_cast<std::size_t>(s.d + 2)) throw IoError(where + ": wrong number of fields");
    const long k = row / cols;
    const Index j = row % cols;
    if (row >= expected || cells[0] != std::to_string(k)) throw IoError(where + ": rows out of order");
    const double t = parse_double(cells[1]);
    const double want = s.grid.t0 + static_cast<double>(j) * s.grid.dt;
    if (std::abs(t - want) > 1e-9 * (1.0 + std::abs(want))) throw IoError(where + ": time off the grid");
    for (int i = 0; i < s.d; ++i) s.paths[static_cast<std::size_t>(k)](i, j) = parse_double(cells[static_cast<std::size_t>(i + 2)]);
    ++row;
  }
  if (row != expected) {
    throw IoError(csv.string() + ": " + std::to_string(row) + " rows, sidecar implies " + std::to_string(expected));
  }
  return out;
}

// ---- checkpoints -------------------------------------------------------------------

json checkpoint_json(const Model& model, std::uint64_t seed, const json& meta) {
  const ModelSpec& spec = model.spec();
  json slices = json::array();
  const ParamStore& ps = model.params();
  for (int i = 0; i < static_cast<int>(ps.slices().size()); ++i) {
    const auto& sl = ps.slices()[static_cast<std::size_t>(i)];
    const auto view = ps.slice(i);
    std::vector<double> vals(view.data(), view.data() + view.size());
    slices.push_back({{"name", sl.name}, {"shape", {sl.rows, sl.cols}}, {"values", vals}});
  }
  return json{
      {"format", "gfinn-checkpoint"},
      {"version", 1},
      {"problem", model.problem().name()},
      {"k_b", model.problem().k_b()},
      {"method", spec.method},
      {"case", spec.case_tag},
      {"model", to_json(spec)},
      {"conventions",
       {{"storage", "column-major"},
        {"skew", "strict upper triangle, row-major"},
        {"triangular", "lower triangle, row-major: (i, j) at i(i+1)/2 + j"},
        {"init", "glorot-uniform weights, zero biases, skew entries uniform on +-0.1"}}},
      {"seed", seed},
      {"meta", meta},
      {"slices", slices},
  };
}

Checkpoint load_checkpoint(const json& doc) {
  try {
    if (doc.at("format") != "gfinn-checkpoint" || doc.at("version") != 1) {
      throw ConfigError("not a version-1 checkpoint");
    }
    std::shared_ptr<const Problem> problem = make_problem(doc.at("problem").get<std::string>());
    if (doc.at("k_b").get<double>() != problem->k_b()) throw ConfigError("checkpoint k_B differs from the problem");
    const ModelSpec spec = model_spec_from_json(doc.at("model"), doc.at("method").get<std::string>(),
                                                doc.at("case").get<std::string>());
    Checkpoint out;
    out.model = build_model(problem, spec);
    out.seed = doc.at("seed").get<std::uint64_t>();
    out.meta = doc.value("meta", json::object());
    ParamStore& ps = out.model->params();
    const json& slices = doc.at("slices");
    if (slices.size() != ps.slices().size()) {
      throw ConfigError("checkpoint has " + std::to_string(slices.size()) + " slices, the model " +
                        std::to_string(ps.slices().size()));
    }
    for (const json& sl : slices) {
      const std::string name = sl.at("name").get<std::string>();
      const int i = ps.find(name);
      if (i < 0) throw ConfigError("checkpoint slice '" + name + "' is not part of the model");
      const auto& want = ps.slices()[static_cast<std::size_t>(i)];
      const auto shape = sl.at("shape").get<std::vector<Index>>();
      const auto vals = sl.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != want.rows || shape[1] != want.cols ||
          static_cast<Index>(vals.size()) != want.rows * want.cols) {
        throw ConfigError("checkpoint slice '" + name + "' has the wrong shape");
      }
      auto view = ps.slice(i);
      for (Index k = 0; k < view.size(); ++k) view.data()[k] = vals[static_cast<std::size_t>(k)];
    }
    return out;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed checkpoint: ") + ex.what());
  }
}

// ---- tables ------------------------------------------------------------------------

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = "iteration,loss,wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + format_double(r.loss) + "," + format_double(r.wall_ms) + "\n";
  }
  return out;
}

std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ContractError("table row width differs from the header");
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_double(r[i]);
    out += "\n";
  }
  return out;
}

}  // namespace gfinn
