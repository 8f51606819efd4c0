#include "gfinn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace gfinn {

namespace {

void require_same_grid(const TrajectorySet& a, const TrajectorySet& b) {
  if (a.d != b.d || a.grid.steps != b.grid.steps || a.grid.dt != b.grid.dt || a.grid.t0 != b.grid.t0) {
    throw ContractError("trajectory sets must share dimension and time grid");
  }
  if (a.size() != b.size()) {
    throw ContractError("trajectory sets have " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                        " paths");
  }
}

double sample_std(const Eigen::Ref<const Vector>& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

double scott(Index n, int dim, double sd) { return std::pow(static_cast<double>(n), -1.0 / (dim + 4)) * sd; }

Vector axis(double lo, double hi, int points) { return Vector::LinSpaced(points, lo, hi); }

}  // namespace

std::vector<double> test_mse(const TrajectorySet& truth, const TrajectorySet& pred) {
  require_same_grid(truth, pred);
  for (int k = 0; k < truth.size(); ++k) {
    if (truth.paths[static_cast<std::size_t>(k)].col(0) != pred.paths[static_cast<std::size_t>(k)].col(0)) {
      throw ContractError("path " + std::to_string(k) + " starts from a different initial state");
    }
  }
  std::vector<double> out(static_cast<std::size_t>(truth.grid.steps + 1), 0.0);
  for (int k = 0; k < truth.size(); ++k) {
    const Matrix diff = truth.paths[static_cast<std::size_t>(k)] - pred.paths[static_cast<std::size_t>(k)];
    for (Index j = 0; j < diff.cols(); ++j) out[static_cast<std::size_t>(j)] += diff.col(j).squaredNorm();
  }
  const double scale = 1.0 / (static_cast<double>(truth.size()) * truth.d);
  for (auto& v : out) v *= scale;
  return out;
}

Matrix sphere_directions(int d, int m, std::uint64_t seed) {
  if (d < 1 || m < 1) throw ConfigError("sphere directions need d >= 1 and m >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix u(d, m);
  for (Index c = 0; c < m; ++c) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (Index r = 0; r < d; ++r) u(r, c) = normal(rng);
      norm = u.col(c).norm();
    }
    u.col(c) /= norm;
  }
  return u;
}

double sliced_w2(const Matrix& x, const Matrix& y, const Matrix& directions) {
  if (x.cols() != y.cols()) {
    throw ContractError("sliced W2 needs equal sample counts (got " + std::to_string(x.cols()) + " and " +
                        std::to_string(y.cols()) + ")");
  }
  if (x.rows() != y.rows() || x.rows() != directions.rows()) throw ContractError("sample dimensions differ");
  if (x.cols() == 0) throw ContractError("sliced W2 needs at least one sample");
  const Matrix px = directions.transpose() * x;  // M x N
  const Matrix py = directions.transpose() * y;
  std::vector<double> a(static_cast<std::size_t>(x.cols())), b(a.size());
  double total = 0.0;
  for (Index m = 0; m < directions.cols(); ++m) {
    for (Index i = 0; i < x.cols(); ++i) {
      a[static_cast<std::size_t>(i)] = px(m, i);
      b[static_cast<std::size_t>(i)] = py(m, i);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    total += s / static_cast<double>(a.size());
  }
  return total / static_cast<double>(directions.cols());
}

double sliced_w2(const Matrix& x, const Matrix& y, int m, std::uint64_t seed) {
  return sliced_w2(x, y, sphere_directions(static_cast<int>(x.rows()), m, seed));
}

std::vector<double> sliced_w2_series(const TrajectorySet& truth, const TrajectorySet& pred, int m,
                                     std::uint64_t seed) {
  require_same_grid(truth, pred);
  const Matrix u = sphere_directions(truth.d, m, seed);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(truth.grid.steps + 1));
  for (int j = 0; j <= truth.grid.steps; ++j) out.push_back(sliced_w2(truth.states_at(j), pred.states_at(j), u));
  return out;
}

AffineCalibration calibrate(const Vector& learned, const Vector& truth) {
  if (learned.size() != truth.size()) throw ContractError("calibration needs paired values");
  if (truth.size() < 2 || truth.maxCoeff() == truth.minCoeff()) {
    throw ContractError("calibration needs at least two distinct target values");
  }
  AffineCalibration out;
  const double lm = learned.mean();
  const double tm = truth.mean();
  const Vector lc = learned.array() - lm;
  const double sxx = lc.squaredNorm();
  if (sxx == 0.0) {
    out.degenerate = true;
    out.b = tm;
  } else {
    out.a = lc.dot(truth.array().matrix() - Vector::Constant(truth.size(), tm)) / sxx;
    out.b = tm - out.a * lm;
  }
  out.residual = ((out.a * learned.array() + out.b) - truth.array()).square().sum();
  return out;
}

Kde1 kde(const Vector& samples, int points) {
  const Index n = samples.size();
  if (n < 30) throw ContractError("KDE needs at least 30 samples (got " + std::to_string(n) + ")");
  if (points < 2) throw ConfigError("KDE grid needs at least 2 points");
  const double sd = sample_std(samples);
  if (!(sd > 0.0)) throw NumericalError("KDE samples have zero variance");
  Kde1 out;
  out.bandwidth = scott(n, 1, sd);
  const double h = out.bandwidth;
  out.x = axis(samples.minCoeff() - 3 * h, samples.maxCoeff() + 3 * h, points);
  out.density = Vector::Zero(points);
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * std::numbers::pi));
  for (Index i = 0; i < points; ++i) {
    out.density(i) = norm * (-0.5 * ((samples.array() - out.x(i)) / h).square()).exp().sum();
  }
  return out;
}

Kde2 kde(const Matrix& samples, int nx, int ny) {
  if (samples.rows() != 2) throw ContractError("2-D KDE needs samples of shape 2 x N");
  const Index n = samples.cols();
  if (n < 30) throw ContractError("KDE needs at least 30 samples (got " + std::to_string(n) + ")");
  if (nx < 2 || ny < 2) throw ConfigError("KDE grid needs at least 2 points per axis");
  const double sx = sample_std(samples.row(0).transpose());
  const double sy = sample_std(samples.row(1).transpose());
  if (!(sx > 0.0) || !(sy > 0.0)) throw NumericalError("KDE samples have zero variance");
  Kde2 out;
  out.bandwidth_x = scott(n, 2, sx);
  out.bandwidth_y = scott(n, 2, sy);
  const double hx = out.bandwidth_x, hy = out.bandwidth_y;
  out.x = axis(samples.row(0).minCoeff() - 3 * hx, samples.row(0).maxCoeff() + 3 * hx, nx);
  out.y = axis(samples.row(1).minCoeff() - 3 * hy, samples.row(1).maxCoeff() + 3 * hy, ny);
  // Separable kernel: density = Kx Ky^T / (n hx hy 2 pi).
  Matrix kx(nx, n), ky(ny, n);
  for (Index i = 0; i < nx; ++i) kx.row(i) = (-0.5 * ((samples.row(0).array() - out.x(i)) / hx).square()).exp();
  for (Index j = 0; j < ny; ++j) ky.row(j) = (-0.5 * ((samples.row(1).array() - out.y(j)) / hy).square()).exp();
  out.density = (kx * ky.transpose()) / (static_cast<double>(n) * hx * hy * 2.0 * std::numbers::pi);
  return out;
}

Band aggregate(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) throw ContractError("no curves to aggregate");
  const std::size_t len = curves[0].size();
  for (const auto& c : curves) {
    if (c.size() != len) throw ContractError("curves differ in length");
  }
  Band out;
  out.min.assign(len, 0.0);
  out.mean.assign(len, 0.0);
  out.max.assign(len, 0.0);
  for (std::size_t j = 0; j < len; ++j) {
    double lo = curves[0][j], hi = curves[0][j], sum = 0.0;
    bool nan = false;
    for (const auto& c : curves) {
      nan = nan || std::isnan(c[j]);
      lo = std::min(lo, c[j]);
      hi = std::max(hi, c[j]);
      sum += c[j];
    }
    const double q = std::numeric_limits<double>::quiet_NaN();
    out.min[j] = nan ? q : lo;
    out.max[j] = nan ? q : hi;
    out.mean[j] = nan ? q : sum / static_cast<double>(curves.size());
  }
  return out;
}

}  // namespace gfinn
