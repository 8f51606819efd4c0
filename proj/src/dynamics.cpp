#include "gfinn/dynamics.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace gfinn {

Matrix TrajectorySet::states_at(int j) const {
  Matrix out(d, size());
  for (int k = 0; k < size(); ++k) out.col(k) = paths[static_cast<std::size_t>(k)].col(j);
  return out;
}

TrajectorySet TrajectorySet::subset(int first, int count) const {
  if (first < 0 || count < 0 || first + count > size()) {
    throw ContractError("trajectory subset [" + std::to_string(first) + ", " + std::to_string(first + count) +
                        ") out of range for " + std::to_string(size()) + " paths");
  }
  TrajectorySet out = *this;
  out.paths.assign(paths.begin() + first, paths.begin() + first + count);
  return out;
}

Var model_step(const Model& model, const Ctx& ctx, const Var& Z, double dt, int order) {
  return rk_step([&](const Var& s) { return model.drift(ctx, s); }, Z, dt, order);
}

Matrix model_step(const Model& model, const Matrix& Z, double dt, int order) {
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  return model_step(model, ctx, tape.leaf(Z), dt, order).value();
}

namespace {

Matrix drift_values(const Model& model, const Matrix& Z) {
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  return model.drift(ctx, tape.leaf(Z)).value();
}

bool column_ok(const Problem& problem, const Matrix& Z, Index c) {
  if (!Z.col(c).allFinite()) return false;
  try {
    problem.check_domain(Z.col(c));
  } catch (const DomainError&) {
    return false;
  }
  return true;
}

TrajectorySet empty_set(const Model& model, const TimeGrid& grid, int n) {
  TrajectorySet out;
  out.problem = model.problem().name();
  out.d = model.dim();
  out.grid = grid;
  out.paths.assign(static_cast<std::size_t>(n), Matrix(model.dim(), grid.steps + 1));
  return out;
}

}  // namespace

TrajectorySet rollout(const Model& model, const Matrix& Z0, const TimeGrid& grid, const RolloutOptions& opt) {
  if (!(grid.dt > 0.0) || grid.steps < 0) throw ConfigError("time grid needs dt > 0 and steps >= 0");
  if (opt.substeps < 1) throw ConfigError("substeps must be >= 1");
  if (Z0.rows() != model.dim()) throw ContractError("initial states have the wrong dimension");
  const int n = static_cast<int>(Z0.cols());
  TrajectorySet out = empty_set(model, grid, n);
  const double h = grid.dt / opt.substeps;
  const Problem& problem = model.problem();
  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto masked = [&](const Matrix& S) {
    Matrix Sc = S;
    for (Index c = 0; c < Sc.cols(); ++c) {
      if (alive[static_cast<std::size_t>(c)] && !column_ok(problem, Sc, c)) alive[static_cast<std::size_t>(c)] = 0;
      if (!alive[static_cast<std::size_t>(c)]) Sc.col(c) = Z0.col(c);
    }
    return drift_values(model, Sc);
  };
  auto plain = [&](const Matrix& S) {
    problem.check_domain(S);
    return drift_values(model, S);
  };

  Matrix Z = Z0;
  for (int k = 0; k < n; ++k) out.paths[static_cast<std::size_t>(k)].col(0) = Z.col(k);
  for (int j = 1; j <= grid.steps; ++j) {
    for (int s = 0; s < opt.substeps; ++s) {
      if (opt.mask_failures) {
        Z = rk_step(masked, Z, h, opt.order);
        for (int k = 0; k < n; ++k) {
          if (alive[static_cast<std::size_t>(k)] && !Z.col(k).allFinite()) alive[static_cast<std::size_t>(k)] = 0;
        }
      } else {
        try {
          Z = rk_step(plain, Z, h, opt.order);
        } catch (const DomainError& e) {
          throw DomainError("rollout step " + std::to_string(j) + " (t = " +
                            std::to_string(grid.t0 + j * grid.dt) + "): " + e.what());
        }
      }
    }
    for (int k = 0; k < n; ++k) {
      auto col = out.paths[static_cast<std::size_t>(k)].col(j);
      if (alive[static_cast<std::size_t>(k)]) {
        col = Z.col(k);
      } else {
        col.setConstant(nan);
      }
    }
  }
  return out;
}

Matrix teacher_forced(const Model& model, const TrajectorySet& data, int order) {
  const int T = data.grid.steps;
  Matrix start(data.d, static_cast<Index>(data.size()) * T);
  for (int k = 0; k < data.size(); ++k) {
    start.middleCols(static_cast<Index>(k) * T, T) = data.paths[static_cast<std::size_t>(k)].leftCols(T);
  }
  return model_step(model, start, data.grid.dt, order);
}

TrajectorySet euler_maruyama(const Model& model, const Matrix& Z0, const TimeGrid& grid, std::uint64_t seed,
                             int substeps) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(Z0.cols()));
  for (std::size_t k = 0; k < seeds.size(); ++k) seeds[k] = derive_seed(seed, k);
  TrajectorySet out = euler_maruyama(model, Z0, grid, seeds, substeps);
  out.seed = seed;
  return out;
}

TrajectorySet euler_maruyama(const Model& model, const Matrix& Z0, const TimeGrid& grid,
                             const std::vector<std::uint64_t>& seeds, int substeps) {
  if (seeds.size() != static_cast<std::size_t>(Z0.cols())) throw ContractError("one noise seed per path required");
  if (!model.stochastic()) throw ConfigError("Euler-Maruyama needs a stochastic model");
  if (!(grid.dt > 0.0) || substeps < 1) throw ConfigError("time grid needs dt > 0 and substeps >= 1");
  const int n = static_cast<int>(Z0.cols());
  const int K = model.noise_dim();
  TrajectorySet out = empty_set(model, grid, n);
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) streams.emplace_back(seeds[static_cast<std::size_t>(k)]);
  std::vector<std::normal_distribution<double>> normal(static_cast<std::size_t>(n));
  const double h = grid.dt / substeps;
  const double sqrt_h = std::sqrt(h);

  Matrix Z = Z0;
  Matrix Xi(K, n);
  for (int k = 0; k < n; ++k) out.paths[static_cast<std::size_t>(k)].col(0) = Z.col(k);
  for (int j = 1; j <= grid.steps; ++j) {
    for (int s = 0; s < substeps; ++s) {
      for (int k = 0; k < n; ++k) {
        for (int i = 0; i < K; ++i) Xi(i, k) = normal[static_cast<std::size_t>(k)](streams[static_cast<std::size_t>(k)]);
      }
      ad::Tape tape;
      const Ctx ctx(tape, model.params());
      const Var zv = tape.leaf(Z);
      const Matrix mu = model.drift(ctx, zv).value();
      const Matrix noise = model.noise(ctx, zv, tape.leaf(Xi)).value();
      Z += h * mu + sqrt_h * noise;
    }
    for (int k = 0; k < n; ++k) out.paths[static_cast<std::size_t>(k)].col(j) = Z.col(k);
  }
  return out;
}

TrajectorySet generate_dataset(const Problem& problem, int n_traj, const TimeGrid& grid, std::uint64_t seed,
                               const GenerateOptions& opt) {
  if (n_traj < 1) throw ConfigError("dataset needs at least one trajectory");
  const std::shared_ptr<const Problem> view(std::shared_ptr<const Problem>{}, &problem);
  ModelSpec spec;
  spec.method = "analytic";
  spec.case_tag.clear();
  const auto exact = build_model(view, spec);

  TrajectorySet out;
  out.problem = problem.name();
  out.d = problem.dim();
  out.grid = grid;
  out.seed = seed;
  out.paths.resize(static_cast<std::size_t>(n_traj));

  auto stream_seed = [&](int k, int attempt) {
    const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(k));
    return attempt == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(attempt));
  };

  std::vector<int> pending(static_cast<std::size_t>(n_traj));
  for (int k = 0; k < n_traj; ++k) pending[static_cast<std::size_t>(k)] = k;
  for (int attempt = 0; !pending.empty(); ++attempt) {
    if (attempt > opt.max_resample) {
      throw DomainError("dataset generation: " + std::to_string(pending.size()) + " path(s) left the " +
                        problem.name() + " domain after " + std::to_string(opt.max_resample) + " redraws");
    }
    const int n = static_cast<int>(pending.size());
    Matrix Z0(problem.dim(), n);
    std::vector<std::uint64_t> noise_seeds(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::uint64_t s = stream_seed(pending[static_cast<std::size_t>(i)], attempt);
      Rng rng(s);
      Z0.col(i) = problem.sample_initial(rng, 1);
      noise_seeds[static_cast<std::size_t>(i)] = derive_seed(s, 1);
    }
    TrajectorySet batch;
    if (problem.stochastic()) {
      batch = euler_maruyama(*exact, Z0, grid, noise_seeds, opt.sde_substeps);
    } else {
      batch = rollout(*exact, Z0, grid, RolloutOptions{4, opt.substeps, true});
    }
    std::vector<int> failed;
    for (int i = 0; i < n; ++i) {
      const Matrix& path = batch.paths[static_cast<std::size_t>(i)];
      bool ok = path.allFinite();
      for (Index j = 0; ok && j < path.cols(); ++j) ok = column_ok(problem, path, j);
      if (ok) {
        out.paths[static_cast<std::size_t>(pending[static_cast<std::size_t>(i)])] = path;
      } else {
        failed.push_back(pending[static_cast<std::size_t>(i)]);
      }
    }
    pending = std::move(failed);
  }
  return out;
}

}  // namespace gfinn
