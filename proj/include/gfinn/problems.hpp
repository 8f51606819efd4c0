#pragma once

// Closed-form benchmark systems. All formulas are written on tape nodes over a
// batch Z (d x B, one state per column) so they can be differentiated to any
// order; numeric callers evaluate them on a scratch tape.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gfinn/nets.hpp"

namespace gfinn {

enum class OpKind { kL, kM };

class Problem;

// Input transform P_A(z) = [Qt^T z; F_A(z)] whose Jacobian rows span the
// orthogonal complement of ker A.
class Transform {
 public:
  Transform(const Problem* problem, OpKind kind, Matrix basis, int num_f)
      : problem_(problem), kind_(kind), basis_(std::move(basis)), num_f_(num_f) {}

  int out_dim() const { return static_cast<int>(basis_.cols()) + num_f_; }
  int num_linear() const { return static_cast<int>(basis_.cols()); }
  int num_f() const { return num_f_; }
  const Matrix& basis() const { return basis_; }  // d x n_linear, orthonormal columns

  Var eval(const Var& Z) const;                   // out_dim x B
  Var jt_apply(const Var& Z, const Var& W) const; // J^T W, d x B

  Vector eval(const Vector& z) const;
  Matrix jacobian(const Vector& z) const;         // out_dim x d

 private:
  const Problem* problem_;
  OpKind kind_;
  Matrix basis_;
  int num_f_;
};

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int steps = 0;
};

class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual bool stochastic() const { return false; }
  double k_b() const { return k_b_; }

  // Throws DomainError naming the violated constraint for any column of Z.
  virtual void check_domain(const Matrix& Z) const;

  virtual Var energy(const Var& Z) const = 0;        // 1 x B
  virtual Var entropy(const Var& Z) const = 0;       // 1 x B
  virtual Var grad_energy(const Var& Z) const = 0;   // d x B
  virtual Var grad_entropy(const Var& Z) const = 0;  // d x B
  virtual Var apply_L(const Var& Z, const Var& V) const = 0;
  virtual Var apply_M(const Var& Z, const Var& V) const = 0;

  // sigma(z) xi with sigma sigma^T = 2 k_B M; Xi is noise_dim x B.
  virtual int noise_dim() const { return 0; }
  virtual Var noise(const Var& Z, const Var& Xi) const;

  virtual const Transform& transform(OpKind kind) const = 0;
  // Values (num_f x B) and gradient of component j (d x B) of F_A.
  virtual Var transform_f(OpKind kind, const Var& Z) const;
  virtual Var transform_f_grad(OpKind kind, const Var& Z, int j) const;

  virtual int rank(OpKind kind) const = 0;

  // Kernel structure of M: basis vectors (columns), the orthonormal variant,
  // and the coefficient map with grad E = J_PM^T c_M(P_M).
  virtual Matrix kernel_basis_m(const Vector& z) const;
  virtual Matrix orthonormal_kernel_basis_m(const Vector& z) const;
  virtual Vector c_m(const Vector& xi) const;

  virtual Matrix sample_initial(Rng& rng, int n) const = 0;  // d x n
  virtual TimeGrid default_grid() const = 0;

 protected:
  double k_b_ = 1.0;
};

class GasContainer final : public Problem {
 public:
  GasContainer();
  std::string name() const override { return "gas"; }
  int dim() const override { return 4; }
  void check_domain(const Matrix& Z) const override;
  Var energy(const Var& Z) const override;
  Var entropy(const Var& Z) const override;
  Var grad_energy(const Var& Z) const override;
  Var grad_entropy(const Var& Z) const override;
  Var apply_L(const Var& Z, const Var& V) const override;
  Var apply_M(const Var& Z, const Var& V) const override;
  const Transform& transform(OpKind kind) const override { return kind == OpKind::kL ? tl_ : tm_; }
  Var transform_f(OpKind kind, const Var& Z) const override;
  Var transform_f_grad(OpKind kind, const Var& Z, int j) const override;
  int rank(OpKind kind) const override { return kind == OpKind::kL ? 2 : 1; }
  Matrix kernel_basis_m(const Vector& z) const override;
  Matrix orthonormal_kernel_basis_m(const Vector& z) const override;
  Vector c_m(const Vector& xi) const override;
  Matrix sample_initial(Rng& rng, int n) const override;
  TimeGrid default_grid() const override { return {0.0, 0.02, 400}; }

  double alpha = 10.0;
  double mass = 1.0;
  double nkb = 1.0;
  double c_hat = 1.0;

 private:
  struct Parts;
  Parts parts(const Var& Z) const;
  Transform tl_;
  Transform tm_;
};

class DoublePendulum final : public Problem {
 public:
  DoublePendulum();
  std::string name() const override { return "pendulum"; }
  int dim() const override { return 10; }
  void check_domain(const Matrix& Z) const override;
  Var energy(const Var& Z) const override;
  Var entropy(const Var& Z) const override;
  Var grad_energy(const Var& Z) const override;
  Var grad_entropy(const Var& Z) const override;
  Var apply_L(const Var& Z, const Var& V) const override;
  Var apply_M(const Var& Z, const Var& V) const override;
  const Transform& transform(OpKind kind) const override { return kind == OpKind::kL ? tl_ : tm_; }
  Var transform_f(OpKind kind, const Var& Z) const override;
  Var transform_f_grad(OpKind kind, const Var& Z, int j) const override;
  int rank(OpKind kind) const override { return kind == OpKind::kL ? 8 : 1; }
  Matrix kernel_basis_m(const Vector& z) const override;
  Matrix orthonormal_kernel_basis_m(const Vector& z) const override;
  Vector c_m(const Vector& xi) const override;
  Matrix sample_initial(Rng& rng, int n) const override;
  TimeGrid default_grid() const override { return {0.0, 0.1, 400}; }

 private:
  struct Parts;
  Parts parts(const Var& Z) const;
  Transform tl_;
  Transform tm_;
};

class Langevin final : public Problem {
 public:
  Langevin();
  std::string name() const override { return "langevin"; }
  int dim() const override { return 3; }
  bool stochastic() const override { return true; }
  Var energy(const Var& Z) const override;
  Var entropy(const Var& Z) const override;
  Var grad_energy(const Var& Z) const override;
  Var grad_entropy(const Var& Z) const override;
  Var apply_L(const Var& Z, const Var& V) const override;
  Var apply_M(const Var& Z, const Var& V) const override;
  int noise_dim() const override { return 1; }
  Var noise(const Var& Z, const Var& Xi) const override;
  const Transform& transform(OpKind kind) const override { return kind == OpKind::kL ? tl_ : tm_; }
  Var transform_f(OpKind kind, const Var& Z) const override;
  Var transform_f_grad(OpKind kind, const Var& Z, int j) const override;
  int rank(OpKind kind) const override { return kind == OpKind::kL ? 2 : 1; }
  Matrix kernel_basis_m(const Vector& z) const override;
  Matrix orthonormal_kernel_basis_m(const Vector& z) const override;
  Vector c_m(const Vector& xi) const override;
  Matrix sample_initial(Rng& rng, int n) const override;
  TimeGrid default_grid() const override { return {0.0, 0.004, 250}; }

 private:
  Transform tl_;
  Transform tm_;
};

std::unique_ptr<Problem> make_problem(const std::string& name);

// Evaluates a tape expression of a batch on a scratch tape.
Matrix eval_batch(const std::function<Var(ad::Tape&, const Var&)>& f, const Matrix& Z);

// Dense operator matrix of apply(Z, .) at a single state.
Matrix operator_matrix(const std::function<Var(const Var&, const Var&)>& apply, const Vector& z);

struct CertificateReport {
  bool membership = false;     // M(z) b = 0 for each listed basis vector
  bool independence = false;   // listed basis has full column rank
  bool orthonormality = false; // orthonormal variant satisfies B^T B = I
  bool rank_count = false;     // rank M + n_M = d
  bool factorization = false;  // grad E = J_PM^T c_M(P_M)
  double membership_residual = 0.0;
  double orthonormality_residual = 0.0;
  double factorization_residual = 0.0;
  int rank_m = 0;
  int kernel_dim = 0;
  std::string failure;  // first violated identity, empty when all pass
  bool passed() const {
    return membership && independence && orthonormality && rank_count && factorization;
  }
};

// Checks the kernel structure of M at z. `basis` overrides the problem's
// kernel basis (used for negative controls).
CertificateReport kernel_certificate(const Problem& problem, const Vector& z, double tol = 1e-10,
                                     const Matrix* basis = nullptr);

}  // namespace gfinn
