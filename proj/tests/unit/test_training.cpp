#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gfinn/ad/fd_check.hpp"
#include "gfinn/error.hpp"
#include "gfinn/training.hpp"

using namespace gfinn;

namespace {

// Zero drift and dt sigma sigma^T = scale * I at dt = 1.
class IsoModel : public Model {
 public:
  IsoModel(std::shared_ptr<const Problem> p, double scale) : Model(std::move(p)), scale_(scale) {}
  void init(std::uint64_t) override {}
  Var drift(const Ctx&, const Var& Z) const override { return ad::constant_like(Z, 0.0); }
  int noise_dim() const override { return dim(); }
  Var noise(const Ctx&, const Var&, const Var& Xi) const override { return std::sqrt(scale_) * Xi; }
  Var diffusion_column(const Ctx& ctx, const Var& Z, int k) const override {
    Matrix col = Matrix::Zero(dim(), Z.value().cols());
    col.row(k).setConstant(scale_);
    return ctx.tape.leaf(col);
  }

 private:
  double scale_;
};

std::unique_ptr<Model> make(const std::string& problem, const std::string& method, const std::string& c,
                            std::uint64_t seed, int layers = 0) {
  ModelSpec spec = default_model_spec(problem, method, c);
  if (layers > 0) {
    for (auto* ls : {&spec.e, &spec.s, &spec.l, &spec.m, &spec.mu, &spec.sigma}) {
      if (ls->layers > 1) *ls = LayerSpec{layers, 8};
    }
  }
  auto m = build_model(make_problem(problem), spec);
  m->init(seed);
  return m;
}

std::unique_ptr<Model> analytic(const std::string& problem) {
  ModelSpec spec;
  spec.method = "analytic";
  spec.case_tag.clear();
  return build_model(make_problem(problem), spec);
}

double grad_rel_error(Model& model, const Batch& batch, int order) {
  const Vector theta = model.params().values();
  const Vector g = loss_and_grad(model, batch, order).second;
  auto f = [&](const Vector& v) {
    model.params().values() = v;
    return loss_value(model, batch, order);
  };
  const Vector fd = ad::fd_gradient(f, theta);
  model.params().values() = theta;
  return (g - fd).norm() / fd.norm();
}

TrajectorySet gas_data(int n, int steps, std::uint64_t seed) {
  return generate_dataset(*make_problem("gas"), n, TimeGrid{0.0, 0.02, steps}, seed);
}

}  // namespace

TEST_CASE("batches index transitions path-major") {
  const TrajectorySet data = gas_data(2, 5, 1);
  CHECK(transition_count(data) == 10);
  const Batch b = make_batch(data, {0, 4, 5, 9});
  CHECK(b.start.col(1) == data.paths[0].col(4));
  CHECK(b.next.col(1) == data.paths[0].col(5));
  CHECK(b.start.col(2) == data.paths[1].col(0));
  CHECK(b.next.col(3) == data.paths[1].col(5));
  CHECK(all_transitions(data).size() == 10);
  CHECK_THROWS_AS(make_batch(data, {10}), ContractError);
}

TEST_CASE("mse loss closed forms") {
  const TrajectorySet data = gas_data(3, 40, 2);
  const Batch all = all_transitions(data);
  const auto exact = analytic("gas");
  const double self = loss_value(*exact, all, 4);
  INFO("exact model RK4 one-step loss " << self);
  CHECK(self <= 1e-10);

  // Case 1 with zero nets has constant E and S, hence zero drift.
  auto zero = make("gas", "gfinn", "1", 0);
  zero->params().values().setZero();
  double expect = 0.0;
  for (Index c = 0; c < all.size(); ++c) expect += (all.next.col(c) - all.start.col(c)).squaredNorm();
  expect /= static_cast<double>(all.size());
  CHECK(loss_value(*zero, all, 2) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("loss gradients match finite differences") {
  const TrajectorySet gas = gas_data(2, 10, 3);
  const Batch gb = make_batch(gas, {0, 3, 7, 12, 19});
  for (const auto& [method, c] : std::vector<std::pair<std::string, std::string>>{
           {"gfinn", "1"}, {"gfinn", "2a"}, {"gnode", "2b"}, {"spnn", "1"}}) {
    auto model = make("gas", method, c, 7, 3);
    INFO(method << " " << c);
    CHECK(grad_rel_error(*model, gb, 2) <= 1e-6);
  }
  const auto lg = make_problem("langevin");
  const TrajectorySet ld = generate_dataset(*lg, 2, TimeGrid{0.0, 0.004, 10}, 3);
  const Batch lb = make_batch(ld, {0, 5, 11, 18});
  for (const auto& [method, c] : std::vector<std::pair<std::string, std::string>>{
           {"gfinn", "1"}, {"gfinn", "2a"}, {"sdenet", ""}}) {
    auto model = make("langevin", method, c, 7, 3);
    INFO(method << " " << c);
    CHECK(grad_rel_error(*model, lb, 2) <= 1e-5);
  }
}

TEST_CASE("nll closed forms") {
  const std::shared_ptr<const Problem> lg = make_problem("langevin");
  const IsoModel iso(lg, 1.0);
  Batch b;
  b.dt = 1.0;
  b.start = Matrix::Zero(3, 2);
  b.next = Matrix::Zero(3, 2);
  ad::Tape t;
  const Ctx ctx(t, iso.params());
  const double eps = kNllJitter * (1.0 + 1.0);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(half_log_2pi == doctest::Approx(0.9189).epsilon(1e-4));
  CHECK(nll_loss(iso, ctx, b).item() == doctest::Approx(3 * half_log_2pi + 1.5 * std::log1p(eps)).epsilon(1e-14));
  b.next(0, 0) = 1.0;
  b.next(0, 1) = -1.0;
  CHECK(nll_loss(iso, ctx, b).item() ==
        doctest::Approx(3 * half_log_2pi + 1.5 * std::log1p(eps) + 0.5 / (1.0 + eps)).epsilon(1e-14));

  const IsoModel bad(lg, -1.0);
  try {
    (void)nll_loss(bad, ctx, b);
    FAIL("expected a factorization failure");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("z = (") != std::string::npos);
  }
  CHECK_THROWS_AS(nll_loss(*analytic("gas"), ctx, b), ConfigError);
}

TEST_CASE("exact langevin model on its own data") {
  const auto lg = make_problem("langevin");
  const TrajectorySet data = generate_dataset(*lg, 40, TimeGrid{0.0, 0.004, 250}, 9);
  const Batch all = all_transitions(data);
  const double exact = loss_value(*analytic("langevin"), all, 2);
  const double untrained = loss_value(*make("langevin", "gfinn", "2a", 1), all, 2);
  MESSAGE("NLL exact " << exact << ", untrained case 2a " << untrained);
  CHECK(std::isfinite(exact));
  CHECK(exact < untrained);
  CHECK(exact <= -2.5);
}

TEST_CASE("adam") {
  Adam adam(2);
  Vector p(2);
  p << 1.0, -3.0;
  const Vector p0 = p;
  adam.step(p, Vector::Zero(2));
  CHECK(p == p0);

  Adam one(1);
  Vector th = Vector::Ones(1);
  one.step(th, Vector::Constant(1, 2.0));
  // m_hat = 2, v_hat = 4
  CHECK(th(0) == doctest::Approx(1.0 - 1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
  CHECK(th(0) == doctest::Approx(0.999).epsilon(1e-8));

  Vector a(3), c(3);
  a << 1.0, 5.0, 0.2;
  c << 0.3, -0.7, 1.1;
  Vector x = Vector::Zero(3);
  Adam bowl(3);
  long steps = 0;
  for (; steps < 20000 && (x - c).cwiseAbs().maxCoeff() > 1e-6; ++steps) {
    bowl.step(x, 2.0 * a.cwiseProduct(x - c));
  }
  INFO("steps " << steps);
  CHECK((x - c).cwiseAbs().maxCoeff() <= 1e-6);

  Vector nan_grad(3);
  nan_grad << 0.0, std::nan(""), 1.0;
  try {
    bowl.step(x, nan_grad);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
  CHECK_THROWS_AS(bowl.step(x, Vector::Zero(2)), ContractError);
}

TEST_CASE("chunked gradients agree with a single tape and ignore the thread count") {
  const TrajectorySet data = gas_data(3, 80, 4);
  const Batch all = all_transitions(data);
  REQUIRE(all.size() > 3 * kGradChunk);
  auto model = make("gas", "gfinn", "2a", 2);
  ad::Tape tape;
  const Ctx ctx(tape, model->params());
  const Var single = training_loss(*model, ctx, all, 2);
  const Vector g_single = ctx.grad(single);
  const auto [l1, g1] = loss_and_grad(*model, all, 2, 1);
  CHECK(l1 == doctest::Approx(single.item()).epsilon(1e-13));
  CHECK((g1 - g_single).norm() <= 1e-13 * g_single.norm());
  for (int threads : {2, 3, 8}) {
    const auto [l, g] = loss_and_grad(*model, all, 2, threads);
    CHECK(l == l1);
    CHECK(g == g1);
  }
}

TEST_CASE("training loop") {
  const TrajectorySet data = gas_data(4, 100, 5);
  TrainOptions opt;
  opt.iterations = 250;
  opt.seed = 3;
  std::vector<LogRow> seen;
  opt.on_log = [&](const LogRow& r) { seen.push_back(r); };
  auto a = make("gas", "gfinn", "2a", 1);
  const TrainRun ra = train(*a, data, opt);
  CHECK(ra.losses.size() == 250);
  CHECK(ra.log.size() == 3);
  CHECK(seen.size() == 3);
  CHECK(ra.log[2].iteration == 200);
  CHECK(ra.log[1].loss == ra.losses[100]);
  CHECK(ra.max_degeneracy <= 1e-10);

  opt.on_log = nullptr;
  auto b = make("gas", "gfinn", "2a", 1);
  const TrainRun rb = train(*b, data, opt);
  CHECK(ra.losses == rb.losses);
  CHECK(a->params().values() == b->params().values());

  auto wrong = make("pendulum", "gfinn", "2a", 1);
  CHECK_THROWS_AS(train(*wrong, data, opt), ConfigError);
  opt.iterations = 0;
  auto still = make("gas", "gfinn", "2a", 1);
  const Vector before = still->params().values();
  const TrainRun r0 = train(*still, data, opt);
  CHECK(r0.losses.empty());
  CHECK(still->params().values() == before);
  CHECK(std::isfinite(r0.final_loss));
}

TEST_CASE("seed ensemble on gas case 2a gives distinct decreasing curves") {
  const TrajectorySet data = gas_data(20, 400, 6);
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto model = make("gas", "gfinn", "2a", seed);
    TrainOptions opt;
    opt.iterations = 1000;
    opt.seed = seed;
    const TrainRun run = train(*model, data, opt);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 100; ++i) {
      head += run.losses[static_cast<std::size_t>(i)];
      tail += run.losses[static_cast<std::size_t>(900 + i)];
    }
    INFO("seed " << seed << " head " << head / 100 << " tail " << tail / 100);
    CHECK(tail < head);
    curves.push_back(run.losses);
  }
  CHECK(curves[0] != curves[1]);
  CHECK(curves[1] != curves[2]);
}

TEST_CASE("spnn loss is the mse plus the penalty and falls on a tiny batch") {
  const TrajectorySet data = gas_data(2, 10, 8);
  const Batch all = all_transitions(data);
  auto model = make("gas", "spnn", "1", 4);
  ad::Tape t;
  const Ctx ctx(t, model->params());
  const double total = training_loss(*model, ctx, all, 2).item();
  const double mse = mse_loss(*model, ctx, all, 2).item();
  const double pen = model->penalty(ctx, t.leaf(all.start)).item();
  CHECK(total == doctest::Approx(mse + pen).epsilon(1e-14));
  CHECK(pen > 0.0);

  TrainOptions opt;
  opt.iterations = 100;
  opt.batch_size = 0;
  const TrainRun run = train(*model, data, opt);
  // Adam is not a descent method; the 100-step trend is checked, not every step.
  CHECK(run.losses.back() < 0.5 * run.losses.front());
  CHECK(run.final_loss < run.losses.back());
}
