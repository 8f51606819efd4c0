#pragma once

// Losses (teacher-forced trajectory MSE, Euler-Maruyama negative
// log-likelihood), Adam and the training loop.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "gfinn/dynamics.hpp"
#include "gfinn/generic.hpp"

namespace gfinn {

// Transition pairs (z_{j-1}, z_j) as columns, all on one step size.
struct Batch {
  Matrix start;
  Matrix next;
  double dt = 0.0;
  Index size() const { return start.cols(); }
};

// Transition i is step i % T of path i / T.
Batch make_batch(const TrajectorySet& data, const std::vector<Index>& transitions);
Batch all_transitions(const TrajectorySet& data);
Index transition_count(const TrajectorySet& data);

// Mean over the batch of |z_hat - z|^2, z_hat one RK step from the observed start.
Var mse_loss(const Model& model, const Ctx& ctx, const Batch& batch, int order);

// Covariance jitter per lane: 1e-6 (1 + tr(2 k_B dt M) / d).
constexpr double kNllJitter = 1e-6;

// Mean over the batch of -log N(z_j - z_{j-1}; dt mu, dt sigma sigma^T + eps I).
// Throws NumericalError naming the failing state when a factorization fails.
Var nll_loss(const Model& model, const Ctx& ctx, const Batch& batch);

// NLL for stochastic models, MSE plus the model penalty otherwise.
Var training_loss(const Model& model, const Ctx& ctx, const Batch& batch, int order);

double loss_value(const Model& model, const Batch& batch, int order);
// Columns per independent tape in loss_and_grad.
inline constexpr Index kGradChunk = 64;

// Loss value and parameter gradient. The batch is cut into kGradChunk-column
// chunks on independent tapes, spread over `threads` workers and reduced in
// chunk order, so the result does not depend on `threads`.
std::pair<double, Vector> loss_and_grad(const Model& model, const Batch& batch, int order, int threads = 1);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Index n, AdamOptions opt = {});
  // Throws NumericalError with the step index on a non-finite gradient.
  void step(Vector& params, const Vector& grad);
  long steps() const { return t_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  AdamOptions opt_;
  Vector m_, v_;
  long t_ = 0;
};

struct LogRow {
  long iteration = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  long iterations = 0;
  int batch_size = 100;  // 0: full batch
  int order = 2;
  int log_every = 100;
  int check_every = 1000;
  std::uint64_t seed = 0;  // minibatch stream
  int threads = 1;
  AdamOptions adam;
  std::function<void(const LogRow&)> on_log;
  // Called after every checkpoint_every updates (0: never), final state excluded.
  long checkpoint_every = 0;
  std::function<void(long, const Model&)> on_checkpoint;
};

struct TrainRun {
  std::vector<double> losses;  // one per iteration
  std::vector<LogRow> log;
  double wall_ms = 0.0;
  double final_loss = 0.0;     // loss over all training transitions after the last update
  double max_degeneracy = 0.0; // worst scaled |L grad S|, |M grad E| seen at checks
  std::uint64_t seed = 0;
};

// Trains the model in place. Structure-preserving models are checked every
// check_every iterations and a residual above 1e-10 raises NumericalError.
TrainRun train(Model& model, const TrajectorySet& data, const TrainOptions& opt);

// Worst of |L grad S| and |M grad E| over the columns of Z, each scaled by
// 1 + |gradient|.
double degeneracy_residual(const GenericModel& model, const Matrix& Z);

}  // namespace gfinn
