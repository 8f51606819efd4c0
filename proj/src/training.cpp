#include "gfinn/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace gfinn {

Index transition_count(const TrajectorySet& data) {
  return static_cast<Index>(data.size()) * data.grid.steps;
}

Batch make_batch(const TrajectorySet& data, const std::vector<Index>& transitions) {
  const Index T = data.grid.steps;
  const Index total = transition_count(data);
  Batch b;
  b.dt = data.grid.dt;
  b.start.resize(data.d, static_cast<Index>(transitions.size()));
  b.next.resize(data.d, static_cast<Index>(transitions.size()));
  for (std::size_t c = 0; c < transitions.size(); ++c) {
    const Index i = transitions[c];
    if (i < 0 || i >= total) throw ContractError("transition index " + std::to_string(i) + " out of range");
    const Matrix& path = data.paths[static_cast<std::size_t>(i / T)];
    b.start.col(static_cast<Index>(c)) = path.col(i % T);
    b.next.col(static_cast<Index>(c)) = path.col(i % T + 1);
  }
  return b;
}

Batch all_transitions(const TrajectorySet& data) {
  std::vector<Index> all(static_cast<std::size_t>(transition_count(data)));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
  return make_batch(data, all);
}

Var mse_loss(const Model& model, const Ctx& ctx, const Batch& batch, int order) {
  if (batch.size() == 0) throw ContractError("empty batch");
  const Var pred = model_step(model, ctx, ctx.tape.leaf(batch.start), batch.dt, order);
  const Var r = pred - ctx.tape.leaf(batch.next);
  return ad::sum(r * r) / static_cast<double>(batch.size());
}

namespace {

// Columns of dt sigma sigma^T as d x B nodes.
std::vector<Var> covariance_columns(const Model& model, const Ctx& ctx, const Var& Z, double dt) {
  const int d = model.dim();
  std::vector<Var> cols;
  cols.reserve(static_cast<std::size_t>(d));
  if (const auto* gm = dynamic_cast<const GenericModel*>(&model)) {
    const Var ge = gm->energy().grad(ctx, Z);
    const double scale = 2.0 * model.problem().k_b() * dt;
    for (int k = 0; k < d; ++k) cols.push_back(scale * gm->m_column(ctx, Z, ge, k));
  } else {
    for (int k = 0; k < d; ++k) cols.push_back(dt * model.diffusion_column(ctx, Z, k));
  }
  return cols;
}

[[noreturn]] void factorization_failure(const Batch& batch, const std::vector<std::vector<Var>>& S, Index lane,
                                        int pivot) {
  std::ostringstream os;
  os << "covariance factorization failed at pivot " << pivot << " for state z = ("
     << batch.start.col(lane).transpose() << "), covariance rows:";
  for (const auto& row : S) {
    os << " [";
    for (const auto& e : row) os << " " << e.value()(0, lane);
    os << " ]";
  }
  throw NumericalError(os.str());
}

}  // namespace

Var nll_loss(const Model& model, const Ctx& ctx, const Batch& batch) {
  if (batch.size() == 0) throw ContractError("empty batch");
  if (!model.stochastic()) throw ConfigError("the likelihood loss needs a stochastic model");
  const int d = model.dim();
  const Var Z = ctx.tape.leaf(batch.start);
  const Var r = ctx.tape.leaf(batch.next - batch.start) - batch.dt * model.drift(ctx, Z);
  const std::vector<Var> cols = covariance_columns(model, ctx, Z, batch.dt);

  std::vector<std::vector<Var>> S(static_cast<std::size_t>(d), std::vector<Var>(static_cast<std::size_t>(d)));
  for (int j = 0; j < d; ++j) {
    const std::vector<Var> entries = ad::lanes(cols[static_cast<std::size_t>(j)]);
    for (int i = 0; i < d; ++i) S[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = entries[static_cast<std::size_t>(i)];
  }
  Var trace = S[0][0];
  for (int i = 1; i < d; ++i) trace = trace + S[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
  const Var eps = kNllJitter * (1.0 + trace / static_cast<double>(d));
  for (int i = 0; i < d; ++i) {
    auto& sii = S[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    sii = sii + eps;
  }

  // Lane-wise Cholesky S = C C^T, then C y = r.
  std::vector<std::vector<Var>> C(static_cast<std::size_t>(d), std::vector<Var>(static_cast<std::size_t>(d)));
  auto at = [](auto& m, int i, int j) -> Var& { return m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; };
  for (int j = 0; j < d; ++j) {
    Var pivot = at(S, j, j);
    for (int k = 0; k < j; ++k) pivot = pivot - at(C, j, k) * at(C, j, k);
    const Matrix& pv = pivot.value();
    for (Index lane = 0; lane < pv.cols(); ++lane) {
      if (!(pv(0, lane) > 0.0)) factorization_failure(batch, S, lane, j);
    }
    at(C, j, j) = ad::sqrt(pivot);
    for (int i = j + 1; i < d; ++i) {
      Var s = at(S, i, j);
      for (int k = 0; k < j; ++k) s = s - at(C, i, k) * at(C, j, k);
      at(C, i, j) = s / at(C, j, j);
    }
  }
  const std::vector<Var> rl = ad::lanes(r);
  std::vector<Var> y(static_cast<std::size_t>(d));
  Var quad, logdet;
  for (int i = 0; i < d; ++i) {
    Var s = rl[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) s = s - at(C, i, k) * y[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(i)] = s / at(C, i, i);
    const Var yy = y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    const Var ld = ad::log(at(C, i, i));
    quad = i == 0 ? yy : quad + yy;
    logdet = i == 0 ? ld : logdet + ld;
  }
  const Var per = 0.5 * quad + logdet + 0.5 * d * std::log(2.0 * std::numbers::pi);
  return ad::sum(per) / static_cast<double>(batch.size());
}

Var training_loss(const Model& model, const Ctx& ctx, const Batch& batch, int order) {
  if (model.stochastic()) return nll_loss(model, ctx, batch);
  Var loss = mse_loss(model, ctx, batch, order);
  const Var pen = model.penalty(ctx, ctx.tape.leaf(batch.start));
  return pen.valid() ? loss + pen : loss;
}

double loss_value(const Model& model, const Batch& batch, int order) {
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  return training_loss(model, ctx, batch, order).item();
}

std::pair<double, Vector> loss_and_grad(const Model& model, const Batch& batch, int order, int threads) {
  const Index B = batch.size();
  if (B == 0) throw ContractError("empty batch");
  // The chunk layout depends only on B, so the summed result is identical for every thread count.
  const Index chunks = (B + kGradChunk - 1) / kGradChunk;
  std::vector<double> values(static_cast<std::size_t>(chunks));
  std::vector<Vector> grads(static_cast<std::size_t>(chunks));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  auto run_chunk = [&](Index c) {
    try {
      const Index first = c * kGradChunk;
      const Index count = std::min(kGradChunk, B - first);
      Batch part{batch.start.middleCols(first, count), batch.next.middleCols(first, count), batch.dt};
      ad::Tape tape;
      const Ctx ctx(tape, model.params());
      const Var loss = training_loss(model, ctx, part, order);
      const double w = static_cast<double>(count) / static_cast<double>(B);
      values[static_cast<std::size_t>(c)] = w * loss.item();
      grads[static_cast<std::size_t>(c)] = w * ctx.grad(loss);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const Index workers = std::max<Index>(1, std::min<Index>(threads, chunks));
  if (workers == 1) {
    for (Index c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (Index c = w; c < chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double value = values[0];
  Vector grad = grads[0];
  for (Index c = 1; c < chunks; ++c) {
    value += values[static_cast<std::size_t>(c)];
    grad += grads[static_cast<std::size_t>(c)];
  }
  return {value, grad};
}

Adam::Adam(Index n, AdamOptions opt) : opt_(opt), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ContractError("Adam state has " + std::to_string(m_.size()) + " entries, got params " +
                        std::to_string(params.size()) + " and gradient " + std::to_string(grad.size()));
  }
  if (!grad.allFinite()) throw NumericalError("non-finite gradient at iteration " + std::to_string(t_));
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  params.array() -= opt_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
}

double degeneracy_residual(const GenericModel& model, const Matrix& Z) {
  double worst = 0.0;
  for (Index c = 0; c < Z.cols(); ++c) {
    const ModelSnapshot s = snapshot(model, Z.col(c));
    worst = std::max(worst, (s.l * s.grad_s).cwiseAbs().maxCoeff() / (1.0 + s.grad_s.norm()));
    worst = std::max(worst, (s.m * s.grad_e).cwiseAbs().maxCoeff() / (1.0 + s.grad_e.norm()));
  }
  return worst;
}

TrainRun train(Model& model, const TrajectorySet& data, const TrainOptions& opt) {
  if (data.problem != model.problem().name()) {
    throw ConfigError("dataset is for '" + data.problem + "' but the model is for '" + model.problem().name() + "'");
  }
  if (data.d != model.dim()) throw ConfigError("dataset dimension does not match the model");
  if (opt.iterations < 0 || opt.batch_size < 0 || opt.log_every < 1 || opt.check_every < 1) {
    throw ConfigError("iterations and batch size must be >= 0, log and check intervals >= 1");
  }
  const Index total = transition_count(data);
  if (total == 0) throw ConfigError("dataset has no transitions");

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };

  TrainRun run;
  run.seed = opt.seed;
  run.losses.reserve(static_cast<std::size_t>(opt.iterations));
  Adam adam(model.params().size(), opt.adam);
  Rng rng(derive_seed(opt.seed, 0x6d62ULL));
  std::uniform_int_distribution<Index> pick(0, total - 1);
  const Batch full = all_transitions(data);
  const bool minibatch = opt.batch_size > 0 && opt.batch_size < total;
  const auto* gm = dynamic_cast<const GenericModel*>(&model);
  const bool structured = gm && model.spec().method != "spnn";
  std::vector<Index> idx(static_cast<std::size_t>(minibatch ? opt.batch_size : 0));

  auto check = [&](long it, const Batch& batch) {
    if (!structured) return;
    const Index n = std::min<Index>(batch.size(), 16);
    const double r = degeneracy_residual(*gm, batch.start.leftCols(n));
    run.max_degeneracy = std::max(run.max_degeneracy, r);
    if (!(r <= 1e-10)) {
      throw NumericalError("degeneracy residual " + std::to_string(r) + " exceeds 1e-10 at iteration " +
                           std::to_string(it));
    }
  };

  for (long it = 0; it < opt.iterations; ++it) {
    Batch batch;
    if (minibatch) {
      for (auto& i : idx) i = pick(rng);
      batch = make_batch(data, idx);
    }
    const Batch& b = minibatch ? batch : full;
    auto [loss, grad] = loss_and_grad(model, b, opt.order, opt.threads);
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(it) + " (params finite: " +
                           (model.params().values().allFinite() ? "yes" : "no") + ")");
    }
    run.losses.push_back(loss);
    if (it % opt.log_every == 0) {
      const LogRow row{it, loss, elapsed()};
      run.log.push_back(row);
      if (opt.on_log) opt.on_log(row);
    }
    if (it % opt.check_every == 0) check(it, b);
    try {
      adam.step(model.params().values(), grad);
    } catch (const NumericalError&) {
      throw NumericalError("non-finite gradient at iteration " + std::to_string(it));
    }
    if (opt.checkpoint_every > 0 && opt.on_checkpoint && (it + 1) % opt.checkpoint_every == 0 &&
        it + 1 < opt.iterations) {
      opt.on_checkpoint(it + 1, model);
    }
  }
  check(opt.iterations, full);
  run.final_loss = loss_value(model, full, opt.order);
  run.wall_ms = elapsed();
  return run;
}

}  // namespace gfinn
