#pragma once

// Experiment commands over one output directory:
//   dataset.csv/.json              generate
//   seed_<s>/checkpoint.json,
//   seed_<s>/train_log.csv, ...    train
//   eval/report.json + CSVs        eval
//   export/*                       export
//   verify/report.json             verify
// Every file carries the config hash.

#include <functional>
#include <string>

#include "gfinn/config.hpp"
#include "gfinn/io.hpp"

namespace gfinn {

using Progress = std::function<void(const std::string&)>;

struct CommandOptions {
  fs::path out = "run";
  bool overwrite = false;
  Progress progress;  // human-readable status lines
};

// Each command returns a one-line summary and throws gfinn errors on failure.
std::string cmd_generate(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt);
std::string cmd_export(const ExperimentConfig& cfg, const CommandOptions& opt);
// Structural invariants and kernel certificates; writes its report, then
// raises NumericalError when any check fails.
std::string cmd_verify(const ExperimentConfig& cfg, const CommandOptions& opt);

fs::path dataset_path(const CommandOptions& opt);
fs::path seed_dir(const CommandOptions& opt, std::uint64_t seed);

}  // namespace gfinn
