#pragma once

// Evaluation metrics: per-step test MSE, squared sliced Wasserstein-2,
// affine calibration of learned scalars, Gaussian KDE and ensemble bands.

#include <cstdint>
#include <vector>

#include "gfinn/dynamics.hpp"

namespace gfinn {

// MSE(t_j) = mean over paths of |Z_j - Z~_j|^2 / d. Grids, path counts and
// initial states must match.
std::vector<double> test_mse(const TrajectorySet& truth, const TrajectorySet& pred);

// M directions uniform on the unit sphere in R^d, one per column.
Matrix sphere_directions(int d, int m, std::uint64_t seed);

// Squared sliced W2 between two d x N sample clouds (one sample per column).
double sliced_w2(const Matrix& x, const Matrix& y, const Matrix& directions);
double sliced_w2(const Matrix& x, const Matrix& y, int m, std::uint64_t seed);

// Sliced W2 at every step of two path sets with one shared direction draw.
std::vector<double> sliced_w2_series(const TrajectorySet& truth, const TrajectorySet& pred, int m,
                                     std::uint64_t seed);

struct AffineCalibration {
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;  // sum of squared residuals of a * learned + b - truth
  bool degenerate = false;  // learned values constant: a = 0, b = mean(truth)
};

// Least-squares (a, b) for truth ~ a * learned + b.
AffineCalibration calibrate(const Vector& learned, const Vector& truth);

struct Kde1 {
  Vector x;
  Vector density;
  double bandwidth = 0.0;
};

struct Kde2 {
  Vector x, y;
  Matrix density;  // density(i, j) at (x_i, y_j)
  double bandwidth_x = 0.0, bandwidth_y = 0.0;
};

// Gaussian KDE with Scott bandwidth N^(-1/(dim + 4)) * sample std per
// dimension on a regular grid spanning the samples padded by 3 bandwidths.
// Needs N >= 30 and nonzero variance.
Kde1 kde(const Vector& samples, int points = 201);
Kde2 kde(const Matrix& samples, int nx, int ny);  // samples: 2 x N

struct Band {
  std::vector<double> min, mean, max;
};

// Pointwise min/mean/max over equal-length curves; NaN entries propagate.
Band aggregate(const std::vector<std::vector<double>>& curves);

}  // namespace gfinn
