#pragma once

// Time integration: explicit Runge-Kutta steps (numeric or on the tape),
// free-running and teacher-forced rollouts, Euler-Maruyama sample paths and
// ground-truth dataset generation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gfinn/error.hpp"
#include "gfinn/generic.hpp"

namespace gfinn {

// Paths share one grid; path k is a d x (steps + 1) matrix.
struct TrajectorySet {
  std::string problem;
  int d = 0;
  TimeGrid grid;
  std::uint64_t seed = 0;
  std::vector<Matrix> paths;

  int size() const { return static_cast<int>(paths.size()); }
  // States of every path at step j, d x N.
  Matrix states_at(int j) const;
  Matrix initial_states() const { return states_at(0); }
  TrajectorySet subset(int first, int count) const;
};

// One explicit step: midpoint (2), Kutta's third order (3) or classical RK4.
// State is a numeric matrix or a tape Var; f maps a batch to its rate.
template <class State, class F>
State rk_step(F&& f, const State& z, double dt, int order) {
  switch (order) {
    case 2: {
      const State k1 = f(z);
      return z + dt * f(State(z + (0.5 * dt) * k1));
    }
    case 3: {
      const State k1 = f(z);
      const State k2 = f(State(z + (0.5 * dt) * k1));
      const State k3 = f(State(z - dt * k1 + (2.0 * dt) * k2));
      return z + (dt / 6.0) * State(k1 + 4.0 * k2 + k3);
    }
    case 4: {
      const State k1 = f(z);
      const State k2 = f(State(z + (0.5 * dt) * k1));
      const State k3 = f(State(z + (0.5 * dt) * k2));
      const State k4 = f(State(z + dt * k3));
      return z + (dt / 6.0) * State(k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    default:
      throw ConfigError("integrator order must be 2, 3 or 4 (got " + std::to_string(order) + ")");
  }
}

// Differentiable model step recorded on ctx.tape.
Var model_step(const Model& model, const Ctx& ctx, const Var& Z, double dt, int order);
// Numeric model step on a scratch tape.
Matrix model_step(const Model& model, const Matrix& Z, double dt, int order);

struct RolloutOptions {
  int order = 4;
  int substeps = 1;
  // Paths that leave the problem domain or turn non-finite are filled with
  // NaN from the failing step on instead of aborting the batch.
  bool mask_failures = false;
};

// Free-running rollout from the columns of Z0 over the grid.
TrajectorySet rollout(const Model& model, const Matrix& Z0, const TimeGrid& grid, const RolloutOptions& opt = {});

// One model step from every observed state except the last: d x (N * steps),
// path-major (column k * steps + j predicts state j + 1 of path k).
Matrix teacher_forced(const Model& model, const TrajectorySet& data, int order);

// Euler-Maruyama paths; path k draws its increments from the stream
// derive_seed(seed, k).
TrajectorySet euler_maruyama(const Model& model, const Matrix& Z0, const TimeGrid& grid, std::uint64_t seed,
                             int substeps = 1);
// Same with an explicit stream seed per path.
TrajectorySet euler_maruyama(const Model& model, const Matrix& Z0, const TimeGrid& grid,
                             const std::vector<std::uint64_t>& seeds, int substeps = 1);

struct GenerateOptions {
  int substeps = 10;        // RK4 sub-steps per output interval (deterministic)
  int sde_substeps = 1;     // Euler-Maruyama sub-steps (1 = native grid)
  int max_resample = 20;    // attempts per path before giving up
};

// Ground truth from the exact model. Path k samples its initial state (and
// its noise) from the stream derive_seed(seed, k); a path that leaves the
// domain is redrawn from a fresh stream.
TrajectorySet generate_dataset(const Problem& problem, int n_traj, const TimeGrid& grid, std::uint64_t seed,
                               const GenerateOptions& opt = {});

}  // namespace gfinn
