#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gfinn/error.hpp"
#include "gfinn/metrics.hpp"

using namespace gfinn;

namespace {

std::unique_ptr<Model> analytic(const std::string& problem) {
  ModelSpec spec;
  spec.method = "analytic";
  spec.case_tag.clear();
  return build_model(make_problem(problem), spec);
}

Matrix normal_cloud(int d, int n, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix x(d, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < d; ++r) x(r, c) = normal(rng) + shift;
  return x;
}

TrajectorySet flat_set(int n, int steps, double value) {
  TrajectorySet s;
  s.problem = "toy";
  s.d = 2;
  s.grid = TimeGrid{0.0, 0.1, steps};
  for (int k = 0; k < n; ++k) s.paths.push_back(Matrix::Constant(2, steps + 1, value));
  return s;
}

double trapezoid(const Vector& x, const Vector& f) {
  double s = 0.0;
  for (Index i = 1; i < x.size(); ++i) s += 0.5 * (f(i) + f(i - 1)) * (x(i) - x(i - 1));
  return s;
}

}  // namespace

TEST_CASE("test mse per step averages over paths and dimensions") {
  TrajectorySet truth = flat_set(2, 3, 0.0);
  TrajectorySet pred = truth;
  pred.paths[0](0, 1) = 2.0;  // |diff|^2 = 4 on one of 2 paths, d = 2
  pred.paths[1].col(3).setConstant(1.0);
  const auto mse = test_mse(truth, pred);
  REQUIRE(mse.size() == 4);
  CHECK(mse[0] == 0.0);
  CHECK(mse[1] == doctest::Approx(4.0 / 4.0));
  CHECK(mse[2] == 0.0);
  CHECK(mse[3] == doctest::Approx(2.0 / 4.0));
}

TEST_CASE("test mse contract violations") {
  const TrajectorySet truth = flat_set(2, 3, 0.0);
  TrajectorySet other = flat_set(2, 4, 0.0);
  CHECK_THROWS_AS(test_mse(truth, other), ContractError);
  other = flat_set(3, 3, 0.0);
  CHECK_THROWS_AS(test_mse(truth, other), ContractError);
  other = truth;
  other.grid.dt = 0.2;
  CHECK_THROWS_AS(test_mse(truth, other), ContractError);
  other = truth;
  other.paths[1](0, 0) = 1.0;
  CHECK_THROWS_AS(test_mse(truth, other), ContractError);
}

TEST_CASE("exact gas model reproduces held-out trajectories") {
  auto problem = make_problem("gas");
  const TrajectorySet data = generate_dataset(*problem, 25, problem->default_grid(), 7).subset(20, 5);
  auto model = analytic("gas");
  RolloutOptions opt;
  opt.substeps = GenerateOptions{}.substeps;
  const TrajectorySet pred = rollout(*model, data.initial_states(), data.grid, opt);
  const auto mse = test_mse(data, pred);
  double worst = 0.0;
  for (double v : mse) worst = std::max(worst, v);
  CHECK(worst <= 1e-8);
}

TEST_CASE("sphere directions are unit vectors and reproducible") {
  const Matrix u = sphere_directions(4, 100, 3);
  for (Index c = 0; c < u.cols(); ++c) CHECK(std::abs(u.col(c).norm() - 1.0) <= 1e-14);
  CHECK(u == sphere_directions(4, 100, 3));
  CHECK(u != sphere_directions(4, 100, 4));
  CHECK_THROWS_AS(sphere_directions(0, 10, 1), ConfigError);
}

TEST_CASE("sliced w2 identity symmetry and contracts") {
  const Matrix x = normal_cloud(3, 500, 1);
  const Matrix y = normal_cloud(3, 500, 2);
  CHECK(sliced_w2(x, x, 100, 9) == 0.0);
  // Permuting samples does not change sorted projections.
  Matrix xr = x.rowwise().reverse();
  CHECK(sliced_w2(x, xr, 100, 9) <= 1e-24);
  CHECK(sliced_w2(x, y, 100, 9) == sliced_w2(y, x, 100, 9));
  CHECK(sliced_w2(x, y, 100, 9) > 0.0);
  CHECK_THROWS_AS(sliced_w2(x, normal_cloud(3, 499, 2), 100, 9), ContractError);
  CHECK_THROWS_AS(sliced_w2(x, normal_cloud(2, 500, 2), 100, 9), ContractError);
}

TEST_CASE("sliced w2 of two standard normal clouds is near zero") {
  const Matrix x = normal_cloud(1, 10000, 11);
  const Matrix y = normal_cloud(1, 10000, 12);
  CHECK(sliced_w2(x, y, 100, 5) <= 5e-3);
}

TEST_CASE("sliced w2 of a translated cloud is |delta|^2 / d") {
  // Projections of a translate differ by <u, delta>; E <u, delta>^2 = |delta|^2 / d
  // for u uniform on the sphere, estimated from M = 100 directions.
  const int d = 4;
  const Matrix x = normal_cloud(d, 2000, 21);
  Vector delta(d);
  delta << 1.0, -2.0, 0.5, 1.5;
  const Matrix y = x.colwise() + delta;
  const double expected = delta.squaredNorm() / d;
  const double sw = sliced_w2(x, y, 100, 31);
  CHECK(std::abs(sw - expected) <= 3.0 / std::sqrt(100.0) * expected);
  // With explicit directions the value is exactly the mean squared projection.
  const Matrix u = sphere_directions(d, 100, 31);
  CHECK(sw == doctest::Approx((u.transpose() * delta).squaredNorm() / 100.0).epsilon(1e-12));
}

TEST_CASE("sliced w2 series shares one direction draw") {
  TrajectorySet a = flat_set(40, 2, 0.0);
  TrajectorySet b = flat_set(40, 2, 0.0);
  for (auto& p : b.paths) p.col(2).array() += 1.0;
  const auto sw = sliced_w2_series(a, b, 100, 4);
  REQUIRE(sw.size() == 3);
  CHECK(sw[0] == 0.0);
  CHECK(sw[1] == 0.0);
  const Matrix u = sphere_directions(2, 100, 4);
  CHECK(sw[2] == doctest::Approx(u.colwise().sum().array().square().mean()).epsilon(1e-12));
}

TEST_CASE("calibration recovers affine maps") {
  Vector truth = Vector::LinSpaced(50, -2.0, 3.0);
  const Vector learned = 2.0 * truth.array() - 3.0;
  const AffineCalibration c = calibrate(learned, truth);
  CHECK(c.a == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.b == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(c.residual <= 1e-20);
  CHECK_FALSE(c.degenerate);

  Vector noisy = learned;
  noisy(0) += 1.0;
  CHECK(calibrate(noisy, truth).residual > 0.0);

  const AffineCalibration flat = calibrate(Vector::Constant(50, 4.0), truth);
  CHECK(flat.degenerate);
  CHECK(flat.a == 0.0);
  CHECK(flat.b == doctest::Approx(truth.mean()));
  CHECK_THROWS_AS(calibrate(learned, Vector::Constant(50, 1.0)), ContractError);
  CHECK_THROWS_AS(calibrate(learned.head(10), truth), ContractError);
}

TEST_CASE("1-d kde matches the normal density") {
  const Vector s = normal_cloud(1, 100000, 41).transpose();
  const Kde1 k = kde(s, 401);
  double sd = std::sqrt((s.array() - s.mean()).square().sum() / (s.size() - 1));
  CHECK(k.bandwidth == doctest::Approx(std::pow(1e5, -0.2) * sd).epsilon(1e-14));
  CHECK(std::abs(trapezoid(k.x, k.density) - 1.0) <= 0.01);
  double sup = 0.0;
  for (Index i = 0; i < k.x.size(); ++i) {
    const double phi = std::exp(-0.5 * k.x(i) * k.x(i)) / std::sqrt(2.0 * std::numbers::pi);
    sup = std::max(sup, std::abs(k.density(i) - phi));
  }
  CHECK(sup <= 0.01);
}

TEST_CASE("2-d kde integrates to one and matches the smoothed normal density") {
  // The expected estimate of N(0, I) data is N(0, (1 + h^2) I) per axis.
  const Matrix s = normal_cloud(2, 100000, 43);
  const Kde2 k = kde(s, 81, 81);
  const double dx = k.x(1) - k.x(0), dy = k.y(1) - k.y(0);
  CHECK(std::abs(k.density.sum() * dx * dy - 1.0) <= 0.01);
  const double vx = 1.0 + k.bandwidth_x * k.bandwidth_x, vy = 1.0 + k.bandwidth_y * k.bandwidth_y;
  double sup = 0.0;
  for (Index i = 0; i < k.x.size(); ++i)
    for (Index j = 0; j < k.y.size(); ++j) {
      const double phi = std::exp(-0.5 * (k.x(i) * k.x(i) / vx + k.y(j) * k.y(j) / vy)) /
                         (2.0 * std::numbers::pi * std::sqrt(vx * vy));
      sup = std::max(sup, std::abs(k.density(i, j) - phi));
    }
  CHECK(sup <= 0.01);
  CHECK(k.bandwidth_x == doctest::Approx(std::pow(1e5, -1.0 / 6.0)).epsilon(0.02));
}

TEST_CASE("kde input errors") {
  CHECK_THROWS_AS(kde(Vector(Vector::LinSpaced(29, 0.0, 1.0))), ContractError);
  CHECK_THROWS_AS(kde(Vector(Vector::Zero(100))), NumericalError);
  Matrix flat = normal_cloud(2, 100, 1);
  flat.row(1).setConstant(3.0);
  CHECK_THROWS_AS(kde(flat, 10, 10), NumericalError);
  CHECK_THROWS_AS(kde(normal_cloud(3, 100, 1), 10, 10), ContractError);
}

TEST_CASE("ensemble band") {
  const Band b = aggregate({{1.0, 2.0, 0.0}, {3.0, -1.0, std::nan("")}});
  CHECK(b.min[0] == 1.0);
  CHECK(b.mean[0] == 2.0);
  CHECK(b.max[0] == 3.0);
  CHECK(b.min[1] == -1.0);
  CHECK(b.mean[1] == 0.5);
  CHECK(std::isnan(b.mean[2]));
  CHECK_THROWS_AS(aggregate({{1.0}, {1.0, 2.0}}), ContractError);
  CHECK_THROWS_AS(aggregate({}), ContractError);
}
