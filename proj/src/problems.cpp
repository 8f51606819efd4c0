#include "gfinn/problems.hpp"

#include <cmath>
#include <sstream>

#include "gfinn/error.hpp"

namespace gfinn {

namespace {

using ad::lanes;
using ad::vstack;

Var zero_lane(const Var& like) { return ad::constant_like(like, 0.0); }

Matrix unit_columns(int d, std::initializer_list<int> idx) {
  Matrix B = Matrix::Zero(d, static_cast<Index>(idx.size()));
  Index c = 0;
  for (int i : idx) B(i, c++) = 1.0;
  return B;
}

Var constant_matrix(ad::Tape& tape, const Matrix& m) { return tape.leaf(m); }

std::string column_text(const Matrix& Z, Index c) {
  std::ostringstream os;
  os << "(";
  for (Index i = 0; i < Z.rows(); ++i) os << (i ? ", " : "") << Z(i, c);
  os << ")";
  return os.str();
}

}  // namespace

// ---- Transform -----------------------------------------------------------------

Var Transform::eval(const Var& Z) const {
  ad::Tape& tape = Z.tape();
  std::vector<Var> parts;
  if (basis_.cols() > 0) parts.push_back(ad::matmul(constant_matrix(tape, basis_.transpose()), Z));
  if (num_f_ > 0) parts.push_back(problem_->transform_f(kind_, Z));
  return vstack(std::span<const Var>(parts));
}

Var Transform::jt_apply(const Var& Z, const Var& W) const {
  if (W.rows() != out_dim()) throw ContractError("transform adjoint applied to a vector of the wrong length");
  ad::Tape& tape = Z.tape();
  const Index d = Z.rows();
  const Index nl = basis_.cols();
  Var out;
  if (nl > 0) out = ad::matmul(constant_matrix(tape, basis_), ad::rows(W, 0, nl));
  for (int j = 0; j < num_f_; ++j) {
    Var term = problem_->transform_f_grad(kind_, Z, j) * ad::broadcast_rows(ad::row(W, nl + j), d);
    out = out.valid() ? out + term : term;
  }
  return out;
}

Vector Transform::eval(const Vector& z) const {
  return eval_batch([this](ad::Tape&, const Var& Z) { return eval(Z); }, z);
}

Matrix Transform::jacobian(const Vector& z) const {
  Matrix J(out_dim(), z.size());
  J.topRows(basis_.cols()) = basis_.transpose();
  for (int j = 0; j < num_f_; ++j) {
    J.row(basis_.cols() + j) =
        eval_batch([&](ad::Tape&, const Var& Z) { return problem_->transform_f_grad(kind_, Z, j); }, z)
            .transpose();
  }
  return J;
}

// ---- Problem defaults ---------------------------------------------------------------

void Problem::check_domain(const Matrix&) const {}

Var Problem::noise(const Var&, const Var&) const {
  throw ConfigError("problem '" + name() + "' has no diffusion term");
}

Var Problem::transform_f(OpKind, const Var&) const {
  throw ContractError("transform of problem '" + name() + "' has no nonlinear components");
}

Var Problem::transform_f_grad(OpKind, const Var&, int) const {
  throw ContractError("transform of problem '" + name() + "' has no nonlinear components");
}

Matrix Problem::kernel_basis_m(const Vector&) const {
  throw ConfigError("problem '" + name() + "' has no registered kernel basis");
}

Matrix Problem::orthonormal_kernel_basis_m(const Vector&) const {
  throw ConfigError("problem '" + name() + "' has no registered kernel basis");
}

Vector Problem::c_m(const Vector&) const {
  throw ConfigError("problem '" + name() + "' has no registered coefficient map");
}

// ---- gas container ---------------------------------------------------------------

struct GasContainer::Parts {
  std::vector<Var> z;  // q, p, S1, S2
  Var e1, e2, t1, t2;
  Var de_dq;  // derivative of E1 + E2 with respect to q
};

GasContainer::GasContainer()
    : tl_(this, OpKind::kL, unit_columns(4, {2, 3}), 0),
      tm_(this, OpKind::kM, unit_columns(4, {0, 1}), 1) {}

void GasContainer::check_domain(const Matrix& Z) const {
  if (Z.rows() != 4) throw ConfigError("gas state must have 4 components");
  for (Index c = 0; c < Z.cols(); ++c) {
    const double q = Z(0, c);
    if (!(q > 0.0 && q < 2.0)) {
      throw DomainError("gas: wall position q must lie in (0, 2), got state " + column_text(Z, c));
    }
  }
}

GasContainer::Parts GasContainer::parts(const Var& Z) const {
  check_domain(Z.value());
  Parts p;
  p.z = lanes(Z);
  const Var& q = p.z[0];
  const double c = 2.0 / (3.0 * nkb);
  const double scale = std::pow(c_hat, -2.0 / 3.0);
  p.e1 = scale * ad::exp(c * p.z[2]) * ad::pow(q, -2.0 / 3.0);
  p.e2 = scale * ad::exp(c * p.z[3]) * ad::pow(2.0 - q, -2.0 / 3.0);
  p.t1 = c * p.e1;
  p.t2 = c * p.e2;
  p.de_dq = (2.0 / 3.0) * (p.e2 / (2.0 - q) - p.e1 / q);
  return p;
}

Var GasContainer::energy(const Var& Z) const {
  const Parts p = parts(Z);
  return p.z[1] * p.z[1] / (2.0 * mass) + p.e1 + p.e2;
}

Var GasContainer::entropy(const Var& Z) const {
  check_domain(Z.value());
  const auto z = lanes(Z);
  return z[2] + z[3];
}

Var GasContainer::grad_energy(const Var& Z) const {
  const Parts p = parts(Z);
  return vstack({p.de_dq, p.z[1] / mass, p.t1, p.t2});
}

Var GasContainer::grad_entropy(const Var& Z) const {
  check_domain(Z.value());
  const auto z = lanes(Z);
  const Var zero = zero_lane(z[0]);
  const Var one = ad::constant_like(z[0], 1.0);
  return vstack({zero, zero, one, one});
}

Var GasContainer::apply_L(const Var& Z, const Var& V) const {
  check_domain(Z.value());
  const auto v = lanes(V);
  const Var zero = zero_lane(v[0]);
  return vstack({v[1], -v[0], zero, zero});
}

Var GasContainer::apply_M(const Var& Z, const Var& V) const {
  const Parts p = parts(Z);
  const auto v = lanes(V);
  const Var zero = zero_lane(v[0]);
  const Var inv1 = 1.0 / p.t1;
  const Var inv2 = 1.0 / p.t2;
  const Var mix = v[2] * inv1 - v[3] * inv2;
  return vstack({zero, zero, alpha * inv1 * mix, -alpha * inv2 * mix});
}

Var GasContainer::transform_f(OpKind kind, const Var& Z) const {
  if (kind != OpKind::kM) return Problem::transform_f(kind, Z);
  const Parts p = parts(Z);
  return p.e1 + p.e2;
}

Var GasContainer::transform_f_grad(OpKind kind, const Var& Z, int j) const {
  if (kind != OpKind::kM || j != 0) return Problem::transform_f_grad(kind, Z, j);
  const Parts p = parts(Z);
  return vstack({p.de_dq, zero_lane(p.t1), p.t1, p.t2});
}

Matrix GasContainer::kernel_basis_m(const Vector& z) const {
  Matrix B = Matrix::Zero(4, 3);
  B(0, 0) = 1.0;
  B(1, 1) = 1.0;
  B.col(2) = eval_batch([this](ad::Tape&, const Var& Z) { return transform_f_grad(OpKind::kM, Z, 0); }, z);
  return B;
}

Matrix GasContainer::orthonormal_kernel_basis_m(const Vector& z) const {
  Matrix B = kernel_basis_m(z);
  B(0, 2) = 0.0;
  B.col(2).normalize();
  return B;
}

Vector GasContainer::c_m(const Vector& xi) const {
  Vector c(3);
  c << 0.0, xi(1) / mass, 1.0;
  return c;
}

Matrix GasContainer::sample_initial(Rng& rng, int n) const {
  std::uniform_real_distribution<double> uq(0.2, 1.8), up(-1.0, 1.0), us(1.0, 3.0);
  Matrix Z(4, n);
  for (int c = 0; c < n; ++c) {
    Z(0, c) = uq(rng);
    Z(1, c) = up(rng);
    Z(2, c) = us(rng);
    Z(3, c) = us(rng);
  }
  return Z;
}

// ---- thermoelastic double pendulum ---------------------------------------------------

struct DoublePendulum::Parts {
  std::vector<Var> z;
  Var dx, dy;      // q2 - q1
  Var lam1, lam2;
  Var e1, e2, t1, t2;
  Var a1, a2;      // (dE_i/dlambda_i) / lambda_i
};

DoublePendulum::DoublePendulum()
    : tl_(this, OpKind::kL, unit_columns(10, {8, 9}), 0),
      tm_(this, OpKind::kM, unit_columns(10, {0, 1, 2, 3, 4, 5, 6, 7}), 1) {}

void DoublePendulum::check_domain(const Matrix& Z) const {
  if (Z.rows() != 10) throw ConfigError("pendulum state must have 10 components");
  for (Index c = 0; c < Z.cols(); ++c) {
    const double l1 = std::hypot(Z(0, c), Z(1, c));
    const double l2 = std::hypot(Z(2, c) - Z(0, c), Z(3, c) - Z(1, c));
    if (!(l1 > 1e-12)) throw DomainError("pendulum: spring length lambda1 must be positive, state " + column_text(Z, c));
    if (!(l2 > 1e-12)) throw DomainError("pendulum: spring length lambda2 must be positive, state " + column_text(Z, c));
  }
}

DoublePendulum::Parts DoublePendulum::parts(const Var& Z) const {
  check_domain(Z.value());
  Parts p;
  p.z = lanes(Z);
  const auto& z = p.z;
  p.dx = z[2] - z[0];
  p.dy = z[3] - z[1];
  p.lam1 = ad::sqrt(z[0] * z[0] + z[1] * z[1]);
  p.lam2 = ad::sqrt(p.dx * p.dx + p.dy * p.dy);
  const Var l1 = ad::log(p.lam1);
  const Var l2 = ad::log(p.lam2);
  p.t1 = ad::exp(z[8] - l1);
  p.t2 = ad::exp(z[9] - l2);
  p.e1 = 0.5 * l1 * l1 + l1 + p.t1 - 1.0;
  p.e2 = 0.5 * l2 * l2 + l2 + p.t2 - 1.0;
  p.a1 = (l1 + 1.0 - p.t1) / (p.lam1 * p.lam1);
  p.a2 = (l2 + 1.0 - p.t2) / (p.lam2 * p.lam2);
  return p;
}

Var DoublePendulum::energy(const Var& Z) const {
  const Parts p = parts(Z);
  const auto& z = p.z;
  const Var kinetic = 0.5 * (z[4] * z[4] + z[5] * z[5] + z[6] * z[6] + z[7] * z[7]);
  return kinetic + p.e1 + p.e2;
}

Var DoublePendulum::entropy(const Var& Z) const {
  check_domain(Z.value());
  const auto z = lanes(Z);
  return z[8] + z[9];
}

Var DoublePendulum::grad_energy(const Var& Z) const {
  const Parts p = parts(Z);
  const auto& z = p.z;
  return vstack({p.a1 * z[0] - p.a2 * p.dx, p.a1 * z[1] - p.a2 * p.dy, p.a2 * p.dx, p.a2 * p.dy,
                 z[4], z[5], z[6], z[7], p.t1, p.t2});
}

Var DoublePendulum::grad_entropy(const Var& Z) const {
  check_domain(Z.value());
  const auto z = lanes(Z);
  const Var zero = zero_lane(z[0]);
  const Var one = ad::constant_like(z[0], 1.0);
  return vstack({zero, zero, zero, zero, zero, zero, zero, zero, one, one});
}

Var DoublePendulum::apply_L(const Var& Z, const Var& V) const {
  check_domain(Z.value());
  const auto v = lanes(V);
  const Var zero = zero_lane(v[0]);
  return vstack({v[4], v[5], v[6], v[7], -v[0], -v[1], -v[2], -v[3], zero, zero});
}

Var DoublePendulum::apply_M(const Var& Z, const Var& V) const {
  const Parts p = parts(Z);
  const auto v = lanes(V);
  const Var zero = zero_lane(v[0]);
  return vstack({zero, zero, zero, zero, zero, zero, zero, zero, p.t2 / p.t1 * v[8] - v[9],
                 p.t1 / p.t2 * v[9] - v[8]});
}

Var DoublePendulum::transform_f(OpKind kind, const Var& Z) const {
  if (kind != OpKind::kM) return Problem::transform_f(kind, Z);
  const Parts p = parts(Z);
  return p.e1 + p.e2;
}

Var DoublePendulum::transform_f_grad(OpKind kind, const Var& Z, int j) const {
  if (kind != OpKind::kM || j != 0) return Problem::transform_f_grad(kind, Z, j);
  const Parts p = parts(Z);
  const auto& z = p.z;
  const Var zero = zero_lane(z[0]);
  return vstack({p.a1 * z[0] - p.a2 * p.dx, p.a1 * z[1] - p.a2 * p.dy, p.a2 * p.dx, p.a2 * p.dy,
                 zero, zero, zero, zero, p.t1, p.t2});
}

Matrix DoublePendulum::kernel_basis_m(const Vector& z) const {
  Matrix B = Matrix::Zero(10, 9);
  for (int i = 0; i < 8; ++i) B(i, i) = 1.0;
  B.col(8) = eval_batch([this](ad::Tape&, const Var& Z) { return transform_f_grad(OpKind::kM, Z, 0); }, z);
  return B;
}

Matrix DoublePendulum::orthonormal_kernel_basis_m(const Vector& z) const {
  Matrix B = kernel_basis_m(z);
  B.block(0, 8, 8, 1).setZero();
  B.col(8).normalize();
  return B;
}

Vector DoublePendulum::c_m(const Vector& xi) const {
  Vector c = Vector::Zero(9);
  c.segment(4, 4) = xi.segment(4, 4);
  c(8) = 1.0;
  return c;
}

Matrix DoublePendulum::sample_initial(Rng& rng, int n) const {
  static const double lo[10] = {0.9, -0.1, 2.1, -0.1, -0.1, 1.9, 0.9, -0.1, 0.9, 0.1};
  static const double hi[10] = {1.1, 0.1, 2.3, 0.1, 0.1, 2.1, 1.1, 0.1, 1.1, 0.3};
  Matrix Z(10, n);
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < 10; ++i) Z(i, c) = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
  }
  return Z;
}

// ---- Langevin ---------------------------------------------------------------------

Langevin::Langevin()
    : tl_(this, OpKind::kL, unit_columns(3, {2}), 0), tm_(this, OpKind::kM, unit_columns(3, {0}), 1) {}

Var Langevin::energy(const Var& Z) const {
  const auto z = lanes(Z);
  return 0.5 * z[1] * z[1] + z[2];
}

Var Langevin::entropy(const Var& Z) const { return ad::row(Z, 2); }

Var Langevin::grad_energy(const Var& Z) const {
  const auto z = lanes(Z);
  return vstack({zero_lane(z[0]), z[1], ad::constant_like(z[0], 1.0)});
}

Var Langevin::grad_entropy(const Var& Z) const {
  const Var q = ad::row(Z, 0);
  const Var zero = zero_lane(q);
  return vstack({zero, zero, ad::constant_like(q, 1.0)});
}

Var Langevin::apply_L(const Var&, const Var& V) const {
  const auto v = lanes(V);
  return vstack({v[1], -v[0], zero_lane(v[0])});
}

Var Langevin::apply_M(const Var& Z, const Var& V) const {
  // M = w w^T / 2 with w = (0, 1, -p)
  const Var p = ad::row(Z, 1);
  const auto v = lanes(V);
  const Var s = 0.5 * (v[1] - p * v[2]);
  return vstack({zero_lane(s), s, -(p * s)});
}

Var Langevin::noise(const Var& Z, const Var& Xi) const {
  const Var p = ad::row(Z, 1);
  const Var x = std::sqrt(k_b_) * Xi;
  return vstack({zero_lane(x), x, -(p * x)});
}

Var Langevin::transform_f(OpKind kind, const Var& Z) const {
  if (kind != OpKind::kM) return Problem::transform_f(kind, Z);
  const auto z = lanes(Z);
  return 0.5 * z[1] * z[1] + z[2];
}

Var Langevin::transform_f_grad(OpKind kind, const Var& Z, int j) const {
  if (kind != OpKind::kM || j != 0) return Problem::transform_f_grad(kind, Z, j);
  return grad_energy(Z);
}

Matrix Langevin::kernel_basis_m(const Vector& z) const {
  Matrix B = Matrix::Zero(3, 2);
  B(0, 0) = 1.0;
  B(1, 1) = z(1);
  B(2, 1) = 1.0;
  return B;
}

Matrix Langevin::orthonormal_kernel_basis_m(const Vector& z) const {
  Matrix B = kernel_basis_m(z);
  B.col(1).normalize();
  return B;
}

Vector Langevin::c_m(const Vector&) const {
  Vector c(2);
  c << 0.0, 1.0;
  return c;
}

Matrix Langevin::sample_initial(Rng& rng, int n) const {
  std::normal_distribution<double> nd(0.0, 0.4);
  Matrix Z(3, n);
  for (int c = 0; c < n; ++c) {
    Z(0, c) = nd(rng);
    Z(1, c) = 2.0 + nd(rng);
    Z(2, c) = nd(rng);
  }
  return Z;
}

// ---- helpers ---------------------------------------------------------------------

std::unique_ptr<Problem> make_problem(const std::string& name) {
  if (name == "gas") return std::make_unique<GasContainer>();
  if (name == "pendulum") return std::make_unique<DoublePendulum>();
  if (name == "langevin") return std::make_unique<Langevin>();
  throw ConfigError("unknown problem '" + name + "' (expected gas, pendulum or langevin)");
}

Matrix eval_batch(const std::function<Var(ad::Tape&, const Var&)>& f, const Matrix& Z) {
  ad::Tape tape;
  const Var z = tape.leaf(Z);
  return f(tape, z).value();
}

Matrix operator_matrix(const std::function<Var(const Var&, const Var&)>& apply, const Vector& z) {
  const Index d = z.size();
  ad::Tape tape;
  const Var Z = tape.leaf(z.replicate(1, d));
  const Var I = tape.leaf(Matrix::Identity(d, d));
  return apply(Z, I).value();
}

CertificateReport kernel_certificate(const Problem& problem, const Vector& z, double tol,
                                     const Matrix* basis) {
  CertificateReport r;
  const int d = problem.dim();
  const Matrix M = operator_matrix([&](const Var& Z, const Var& V) { return problem.apply_M(Z, V); }, z);
  const Matrix B = basis ? *basis : problem.kernel_basis_m(z);
  r.kernel_dim = static_cast<int>(B.cols());
  const double m_norm = M.cwiseAbs().rowwise().sum().maxCoeff();

  double worst = 0.0;
  for (Index c = 0; c < B.cols(); ++c) {
    const double scale = std::max(1.0, m_norm * B.col(c).cwiseAbs().maxCoeff());
    worst = std::max(worst, (M * B.col(c)).cwiseAbs().maxCoeff() / scale);
  }
  r.membership_residual = worst;
  r.membership = worst <= tol;

  Eigen::JacobiSVD<Matrix> svd_b(B);
  const auto sb = svd_b.singularValues();
  r.independence = sb.size() > 0 && sb(sb.size() - 1) > 1e-8 * sb(0);

  const Matrix O = problem.orthonormal_kernel_basis_m(z);
  const double ortho = (O.transpose() * O - Matrix::Identity(O.cols(), O.cols())).cwiseAbs().maxCoeff();
  const double ortho_member = (M * O).cwiseAbs().maxCoeff() / std::max(1.0, m_norm);
  r.orthonormality_residual = std::max(ortho, ortho_member);
  r.orthonormality = r.orthonormality_residual <= tol && O.cols() == B.cols();

  Eigen::JacobiSVD<Matrix> svd_m(M);
  const auto sm = svd_m.singularValues();
  int rank = 0;
  for (Index i = 0; i < sm.size(); ++i) {
    if (sm(i) > 1e-9 * std::max(1.0, sm(0))) ++rank;
  }
  r.rank_m = rank;
  r.rank_count = rank + r.kernel_dim == d;

  const Transform& tm = problem.transform(OpKind::kM);
  const Vector grad_e = eval_batch([&](ad::Tape&, const Var& Z) { return problem.grad_energy(Z); }, z);
  const Vector factored = tm.jacobian(z).transpose() * problem.c_m(tm.eval(z));
  r.factorization_residual = (grad_e - factored).cwiseAbs().maxCoeff() / std::max(1.0, grad_e.cwiseAbs().maxCoeff());
  r.factorization = r.factorization_residual <= tol;

  if (!r.membership) {
    r.failure = "membership: M(z) b != 0 for a listed kernel vector";
  } else if (!r.independence) {
    r.failure = "independence: listed kernel vectors are linearly dependent";
  } else if (!r.orthonormality) {
    r.failure = "orthonormality: orthonormal kernel basis fails B^T B = I or M B = 0";
  } else if (!r.rank_count) {
    r.failure = "rank count: rank M + kernel dimension != d";
  } else if (!r.factorization) {
    r.failure = "factorization: grad E != J_PM^T c_M(P_M)";
  }
  return r;
}

}  // namespace gfinn
