#include <cmath>

#include "doctest.h"
#include "gfinn/baselines.hpp"
#include "gfinn/error.hpp"
#include "gfinn/generic.hpp"

using namespace gfinn;

namespace {

std::unique_ptr<Model> make(const std::string& problem, const std::string& method, const std::string& c,
                            std::uint64_t seed) {
  auto m = build_model(make_problem(problem), default_model_spec(problem, method, c));
  m->init(seed);
  return m;
}

// sigma(z) as a dense d x K matrix from the model's noise map.
Matrix sigma_of(const Model& model, const Vector& z) {
  const int k = model.noise_dim();
  ad::Tape t;
  const Ctx ctx(t, model.params());
  return model.noise(ctx, t.leaf(z.replicate(1, k)), t.leaf(Matrix::Identity(k, k))).value();
}

Vector divergence_fd(const GenericModel& model, const Vector& z, double h) {
  Vector div = Vector::Zero(z.size());
  for (Index k = 0; k < z.size(); ++k) {
    Vector zp = z, zm = z;
    zp(k) += h;
    zm(k) -= h;
    div += (snapshot(model, zp).m.col(k) - snapshot(model, zm).m.col(k)) / (2 * h);
  }
  return div;
}

}  // namespace

TEST_CASE("structure of every learned model at random parameters") {
  for (const char* pname : {"gas", "pendulum", "langevin"}) {
    const auto problem = make_problem(pname);
    for (const auto& mc : method_cases(*problem)) {
      if (mc.method == "sdenet") continue;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto model = make(pname, mc.method, mc.case_tag, seed);
        const auto& gm = dynamic_cast<const GenericModel&>(*model);
        Rng rng(100 + seed);
        const Matrix Z = problem->sample_initial(rng, 30);
        double skew = 0, min_eig = 0, deg_l = 0, deg_m = 0, drift_gap = 0;
        for (Index c = 0; c < Z.cols(); ++c) {
          const ModelSnapshot s = snapshot(gm, Z.col(c));
          skew = std::max(skew, (s.l + s.l.transpose()).cwiseAbs().maxCoeff());
          min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(s.m).eigenvalues().minCoeff());
          deg_l = std::max(deg_l, (s.l * s.grad_s).cwiseAbs().maxCoeff() / (1.0 + s.grad_s.norm()));
          deg_m = std::max(deg_m, (s.m * s.grad_e).cwiseAbs().maxCoeff() / (1.0 + s.grad_e.norm()));
          if (!problem->stochastic()) {
            const Vector f = eval_drift(gm, Z.col(c));
            const Vector expect = s.l * s.grad_e + s.m * s.grad_s;
            drift_gap = std::max(drift_gap, (f - expect).cwiseAbs().maxCoeff() / (1.0 + expect.norm()));
          }
        }
        INFO(pname << " " << mc.method << " " << mc.case_tag);
        CHECK(skew <= 1e-12);
        CHECK(min_eig >= -1e-10);
        if (mc.method != "spnn") {
          CHECK(deg_l <= 1e-10);
          CHECK(deg_m <= 1e-10);
        } else {
          CHECK(deg_l + deg_m > 1e-6);
        }
        CHECK(drift_gap <= 1e-12);
      }
    }
  }
}

TEST_CASE("stochastic drift, divergence and fluctuation-dissipation") {
  const auto problem = make_problem("langevin");
  std::vector<std::pair<std::string, std::string>> combos = {{"analytic", ""}, {"gfinn", "1"}, {"gfinn", "2a"}, {"gfinn", "2b"}};
  for (const auto& [method, c] : combos) {
    const auto model = make("langevin", method, c, 4);
    const auto& gm = dynamic_cast<const GenericModel&>(*model);
    Rng rng(8);
    const Matrix Z = problem->sample_initial(rng, 10);
    for (Index col = 0; col < Z.cols(); ++col) {
      const Vector z = Z.col(col);
      ad::Tape t;
      const Ctx ctx(t, gm.params());
      const Var zv = t.leaf(z);
      const Vector div = gm.divergence_m(ctx, zv, gm.energy().grad(ctx, zv)).value();
      const Vector fd = divergence_fd(gm, z, 1e-5);
      INFO(method << " " << c);
      CHECK((div - fd).cwiseAbs().maxCoeff() <= 1e-7 * (1.0 + fd.norm()));

      const ModelSnapshot s = snapshot(gm, z);
      const Vector mu = eval_drift(gm, z);
      const Vector expect = s.l * s.grad_e + s.m * s.grad_s + problem->k_b() * div;
      CHECK((mu - expect).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + expect.norm()));

      const Matrix sig = sigma_of(gm, z);
      const Matrix sst = sig * sig.transpose();
      CHECK((sst - 2.0 * problem->k_b() * s.m).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + sst.norm()));
      CHECK((sig.transpose() * s.grad_e).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + s.grad_e.norm()));

      ad::Tape t2;
      const Ctx ctx2(t2, gm.params());
      for (int k = 0; k < 3; ++k) {
        const Vector colk = gm.diffusion_column(ctx2, t2.leaf(z), k).value();
        CHECK((colk - sst.col(k)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + sst.norm()));
      }
    }
  }

  // Exact model: divergence (0, 0, -1/2) for every state.
  const auto exact = make("langevin", "analytic", "", 0);
  Vector z(3);
  z << 0.4, -1.3, 0.2;
  ad::Tape t;
  const Ctx ctx(t, exact->params());
  const auto& gm = dynamic_cast<const GenericModel&>(*exact);
  const Var zv = t.leaf(z);
  const Vector div = gm.divergence_m(ctx, zv, gm.energy().grad(ctx, zv)).value();
  CHECK(div(0) == 0.0);
  CHECK(div(1) == 0.0);
  CHECK(div(2) == -0.5);
}

TEST_CASE("analytic gas model has the symmetric fixed point") {
  const auto model = make("gas", "analytic", "", 0);
  Vector z(4);
  z << 1.0, 0.0, 2.0, 2.0;
  CHECK(eval_drift(*model, z).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("gnode tensor operator") {
  ParamStore s;
  GnodeL l(s, "xi", 3);
  Vector g = Vector::Zero(3);
  g(2) = 1.0;
  auto dense = [&](const Vector& gv) {
    ad::Tape t;
    const Ctx ctx(t, s);
    return l.apply(ctx, t.leaf(gv.replicate(1, 3)), t.leaf(gv.replicate(1, 3)), t.leaf(Matrix::Identity(3, 3)))
        .value();
  };
  CHECK(dense(g).isZero(0.0));
  s.slice(l.slice())(0, 0) = 1.0;
  Matrix expect = Matrix::Zero(3, 3);
  expect(0, 1) = 1.0;
  expect(1, 0) = -1.0;
  CHECK(dense(g) == expect);
  const auto xi = l.tensor(s);
  CHECK(xi[0 * 9 + 1 * 3 + 2] == 1.0);
  CHECK(xi[1 * 9 + 2 * 3 + 0] == 1.0);
  CHECK(xi[1 * 9 + 0 * 3 + 2] == -1.0);
  CHECK(xi[2 * 9 + 1 * 3 + 0] == -1.0);
  CHECK(xi[0] == 0.0);
  CHECK_THROWS_AS(GnodeL(s, "xi2", 2), ConfigError);

  // Random tensor: antisymmetric under every index swap.
  ParamStore s4;
  GnodeL l4(s4, "xi", 5);
  Rng rng(1);
  l4.init(s4, rng);
  const auto t4 = l4.tensor(s4);
  double worst = 0.0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b)
      for (int c = 0; c < 5; ++c) {
        const double v = t4[a * 25 + b * 5 + c];
        worst = std::max({worst, std::abs(v + t4[b * 25 + a * 5 + c]), std::abs(v + t4[a * 25 + c * 5 + b]),
                          std::abs(v + t4[c * 25 + b * 5 + a])});
      }
  CHECK(worst == 0.0);
}

TEST_CASE("spnn penalty vanishes exactly with the degeneracy residuals") {
  auto model = make("gas", "spnn", "1", 3);
  const auto& gm = dynamic_cast<const GenericModel&>(*model);
  Rng rng(2);
  const Matrix Z = gm.problem().sample_initial(rng, 16);
  auto penalty = [&] {
    ad::Tape t;
    const Ctx ctx(t, gm.params());
    return gm.penalty(ctx, t.leaf(Z)).item();
  };
  double oracle = 0.0;
  for (Index c = 0; c < Z.cols(); ++c) {
    const ModelSnapshot s = snapshot(gm, Z.col(c));
    oracle += (s.l * s.grad_s).squaredNorm() + (s.m * s.grad_e).squaredNorm();
  }
  oracle *= gm.spec().spnn_lambda / static_cast<double>(Z.cols());
  CHECK(oracle > 0.0);
  CHECK(penalty() == doctest::Approx(oracle).epsilon(1e-12));

  model->params().values().setZero();
  CHECK(penalty() == 0.0);

  // Structured models carry no soft penalty.
  const auto gfinn = make("gas", "gfinn", "2a", 3);
  ad::Tape t;
  const Ctx ctx(t, gfinn->params());
  CHECK_FALSE(gfinn->penalty(ctx, t.leaf(Z)).valid());
}

TEST_CASE("sdenet zero nets and sigma layout") {
  auto model = make("langevin", "sdenet", "", 5);
  const auto& sde = dynamic_cast<const SdeNetModel&>(*model);
  Vector z(3);
  z << 0.1, 1.9, -0.2;
  const Matrix sig = sde.sigma_matrix(z);
  CHECK((sigma_of(sde, z) - sig).cwiseAbs().maxCoeff() <= 1e-14);
  ad::Tape t;
  const Ctx ctx(t, sde.params());
  const Matrix sst = sig * sig.transpose();
  for (int k = 0; k < 3; ++k) {
    CHECK((sde.diffusion_column(ctx, t.leaf(z), k).value() - sst.col(k)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  model->params().values().setZero();
  CHECK(eval_drift(*model, z).isZero(0.0));
  CHECK(sde.sigma_matrix(z).isZero(0.0));
}

TEST_CASE("model validation lists every violation") {
  const auto gas = make_problem("gas");
  const auto dp = make_problem("pendulum");
  const auto lg = make_problem("langevin");
  CHECK_FALSE(validate_model_spec(*gas, default_model_spec("gas", "spnn", "2a")).empty());
  CHECK_FALSE(validate_model_spec(*gas, default_model_spec("gas", "gnode", "1")).empty());
  CHECK_FALSE(validate_model_spec(*gas, default_model_spec("gas", "sdenet", "")).empty());
  CHECK_FALSE(validate_model_spec(*lg, default_model_spec("langevin", "gnode", "2a")).empty());
  CHECK_FALSE(validate_model_spec(*gas, default_model_spec("gas", "bogus", "1")).empty());

  ModelSpec low = default_model_spec("pendulum", "gfinn", "2a");
  low.k_l = 5;
  low.k_m = 0;
  const auto errs = validate_model_spec(*dp, low);
  CHECK(errs.size() == 2);
  CHECK_THROWS_AS(build_model(make_problem("pendulum"), low), ConfigError);

  ModelSpec bad = default_model_spec("gas", "spnn", "2b");
  bad.spnn_lambda = 0.0;
  CHECK(validate_model_spec(*gas, bad).size() == 2);

  int total = 0;
  for (const auto* p : {gas.get(), dp.get(), lg.get()}) total += static_cast<int>(method_cases(*p).size());
  // gas and pendulum: gfinn x3, gnode x2, spnn x1; langevin: gfinn x3, sdenet
  CHECK(total == 6 + 6 + 4);
}
