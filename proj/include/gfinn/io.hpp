#pragma once

// File formats: dataset CSV with JSON sidecar, model checkpoints, training
// logs and CSV tables. Doubles are written as shortest round-trip decimals so
// rereading restores the exact bits and reruns produce identical bytes.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfinn/dynamics.hpp"
#include "gfinn/training.hpp"

namespace gfinn {

namespace fs = std::filesystem;

std::string format_double(double v);  // "nan", "inf", "-inf" for non-finite values
double parse_double(const std::string& s);

// IoError naming every listed path that already exists, unless overwrite.
void ensure_absent(const std::vector<fs::path>& paths, bool overwrite);
void write_text(const fs::path& path, const std::string& text);  // creates parent directories
std::string read_text(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const fs::path& path);

// Header `traj_id,t,z0,...,z{d-1}`, one row per path and time.
std::string dataset_csv(const TrajectorySet& set);
fs::path sidecar_path(const fs::path& csv);
// Writes the CSV and its sidecar: problem, d, grid, seed, trajectory count
// and every key of `extra`.
void write_dataset(const fs::path& csv, const TrajectorySet& set, const nlohmann::json& extra);

struct DatasetFile {
  TrajectorySet set;
  nlohmann::json sidecar;
};
// Parses and cross-checks the CSV against its sidecar.
DatasetFile read_dataset(const fs::path& csv);

// Model checkpoint: problem, k_B, method, case, architecture, fill
// conventions, the seed and every parameter slice with its shape.
nlohmann::json checkpoint_json(const Model& model, std::uint64_t seed, const nlohmann::json& meta);
struct Checkpoint {
  std::unique_ptr<Model> model;
  std::uint64_t seed = 0;
  nlohmann::json meta;
};
Checkpoint load_checkpoint(const nlohmann::json& doc);

std::string log_csv(const std::vector<LogRow>& rows);

// CSV with the given header; each row must match its width.
std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

}  // namespace gfinn
