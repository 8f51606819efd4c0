#pragma once

// Experiment configuration: one JSON document layered over the desk or full
// preset of its (problem, method, case), validated as a whole.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfinn/dynamics.hpp"
#include "gfinn/training.hpp"

namespace gfinn {

struct DataConfig {
  int trajectories = 0;
  int train = 0;  // the first `train` paths train, the rest are held out
  TimeGrid grid;
  GenerateOptions generator;
};

struct TrainConfig {
  long iterations = 0;
  int batch_size = 100;  // 0: full batch
  int order = 2;
  int log_every = 100;
  int check_every = 1000;
  long checkpoint_every = 0;  // 0: final checkpoint only
  AdamOptions adam;
};

struct EvalConfig {
  int order = 0;     // rollout integrator; 0: the order the checkpoint was trained with
  int substeps = 1;  // rollout sub-steps per data interval
  int samples = 0;            // fresh initial states for stochastic problems
  int steps = 0;              // stochastic evaluation grid length on the data step
  int sw_directions = 100;
  std::uint64_t sw_seed = 0;  // direction stream for sliced W2
  std::vector<double> kde_times;
  int kde_points = 101;
};

struct ExperimentConfig {
  std::string problem = "gas";
  std::string method = "gfinn";
  std::string case_tag = "2a";
  std::string scale = "desk";
  std::vector<std::uint64_t> seeds{0};
  int threads = 1;
  ModelSpec model;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
};

// Preset for a (problem, method, case) at desk or full scale.
ExperimentConfig preset(const std::string& problem, const std::string& method, const std::string& case_tag,
                        const std::string& scale);

struct ConfigOverrides {
  std::optional<std::string> scale;
  std::optional<std::uint64_t> seed;  // replaces the seed list with this seed
  std::optional<int> threads;
};

// Parses a document (object; may be empty) over its preset. Unknown keys and
// every violated constraint are collected into one ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc, const ConfigOverrides& over = {});
ExperimentConfig load_config(const std::string& path, const ConfigOverrides& over = {});

// Full resolved configuration.
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& doc, const std::string& method, const std::string& case_tag);

// Every violated constraint; empty when valid.
std::vector<std::string> validate(const ExperimentConfig& cfg);

// 16 hex digits of FNV-1a over the canonical serialization, thread count excluded.
std::string config_hash(const ExperimentConfig& cfg);

TrainOptions train_options(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace gfinn
