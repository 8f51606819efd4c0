#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace gfinn::ad {

// Largest coordinate-wise relative error between an analytic gradient and a
// central finite-difference estimate of f at x:
//   max_i |g_i - fd_i| / (|g_i| + 1e-12).
// Non-smooth points simply report a large error.
template <class F>
double fd_check(F&& f, const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, double h = 1e-5) {
  double worst = 0.0;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic(i) - fd) / (std::abs(analytic(i)) + 1e-12);
    worst = std::max(worst, std::isnan(err) ? INFINITY : err);
  }
  return worst;
}

// Central finite-difference gradient.
template <class F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Richardson-extrapolated central difference (4 C(h/2) - C(h)) / 3, fourth
// order in h; a larger h keeps roundoff low when |grad| << |f|.
template <class F>
Eigen::VectorXd fd_gradient_richardson(F&& f, const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::VectorXd coarse = fd_gradient(f, x, h);
  const Eigen::VectorXd fine = fd_gradient(f, x, 0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace gfinn::ad
