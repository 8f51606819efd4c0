#pragma once

// GENERIC-structured models z' = L grad E + M grad S (+ k_B div M for the
// stochastic drift), assembled from scalar and operator components that are
// either closed-form or learned.

#include <cstdint>
#include <memory>
#include <string>

#include "gfinn/nets.hpp"
#include "gfinn/problems.hpp"

namespace gfinn {

struct LayerSpec {
  int layers = 5;
  int width = 30;
};

struct ModelSpec {
  std::string method = "gfinn";  // gfinn | gnode | spnn | sdenet | analytic
  std::string case_tag = "2a";   // 1 | 2a | 2b
  LayerSpec e{5, 30};
  LayerSpec s{5, 30};
  LayerSpec l{5, 30};
  LayerSpec m{5, 30};
  int k_l = 5;
  int k_m = 4;
  double spnn_lambda = 0.1;
  int sdenet_noise_dim = 0;  // 0: state dimension
  LayerSpec mu{5, 30};
  LayerSpec sigma{5, 30};
};

// Architecture defaults per problem, method and case.
ModelSpec default_model_spec(const std::string& problem, const std::string& method,
                             const std::string& case_tag);

class Model {
 public:
  explicit Model(std::shared_ptr<const Problem> problem) : problem_(std::move(problem)) {}
  virtual ~Model() = default;

  const Problem& problem() const { return *problem_; }
  std::shared_ptr<const Problem> problem_ptr() const { return problem_; }
  int dim() const { return problem_->dim(); }
  bool stochastic() const { return problem_->stochastic(); }
  const ModelSpec& spec() const { return spec_; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  virtual void init(std::uint64_t seed) = 0;

  // Deterministic right-hand side, or the SDE drift for stochastic problems.
  virtual Var drift(const Ctx& ctx, const Var& Z) const = 0;
  // sigma xi for Xi of shape noise_dim x B.
  virtual int noise_dim() const = 0;
  virtual Var noise(const Ctx& ctx, const Var& Z, const Var& Xi) const = 0;
  // Column k of sigma sigma^T (d x B).
  virtual Var diffusion_column(const Ctx& ctx, const Var& Z, int k) const = 0;
  // Extra training penalty at observed states; invalid Var when none.
  virtual Var penalty(const Ctx&, const Var&) const { return {}; }

 protected:
  std::shared_ptr<const Problem> problem_;
  ModelSpec spec_;
  ParamStore params_;
};

// ---- components ---------------------------------------------------------------------

class ScalarComponent {
 public:
  virtual ~ScalarComponent() = default;
  virtual std::string kind() const = 0;
  virtual void init(ParamStore&, Rng&) const {}
  virtual std::pair<Var, Var> value_and_grad(const Ctx& ctx, const Var& Z) const = 0;
  Var value(const Ctx& ctx, const Var& Z) const { return value_and_grad(ctx, Z).first; }
  Var grad(const Ctx& ctx, const Var& Z) const { return value_and_grad(ctx, Z).second; }
};

// A(z) applied to V; G is the gradient of the scalar the operator must
// annihilate (grad S for L, grad E for M).
class OperatorComponent {
 public:
  virtual ~OperatorComponent() = default;
  virtual std::string kind() const = 0;
  virtual void init(ParamStore&, Rng&) const {}
  virtual Var apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const = 0;
  // F xi with F F^T = A (symmetric PSD operators only).
  virtual int factor_dim() const { return 0; }
  virtual Var factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const;
};

class AnalyticScalar final : public ScalarComponent {
 public:
  AnalyticScalar(const Problem& p, bool energy) : problem_(p), energy_(energy) {}
  std::string kind() const override { return "analytic"; }
  std::pair<Var, Var> value_and_grad(const Ctx& ctx, const Var& Z) const override;

 private:
  const Problem& problem_;
  bool energy_;
};

// G(z) = f(P_A(z)); grad G = J_PA^T grad f.
class TransformedNet final : public ScalarComponent {
 public:
  TransformedNet(ParamStore& store, const std::string& prefix, const Transform& t, const LayerSpec& ls);
  std::string kind() const override { return "transformed-net"; }
  void init(ParamStore& store, Rng& rng) const override { net_.init(store, rng); }
  std::pair<Var, Var> value_and_grad(const Ctx& ctx, const Var& Z) const override;
  const Mlp& net() const { return net_; }

 private:
  const Transform& transform_;
  Mlp net_;
};

class PlainNet final : public ScalarComponent {
 public:
  PlainNet(ParamStore& store, const std::string& prefix, int d, const LayerSpec& ls);
  std::string kind() const override { return "net"; }
  void init(ParamStore& store, Rng& rng) const override { net_.init(store, rng); }
  std::pair<Var, Var> value_and_grad(const Ctx& ctx, const Var& Z) const override;
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

class AnalyticOperator final : public OperatorComponent {
 public:
  AnalyticOperator(const Problem& p, OpKind kind) : problem_(p), kind_(kind) {}
  std::string kind() const override { return "analytic"; }
  Var apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const override;
  int factor_dim() const override;
  Var factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const override;

 private:
  const Problem& problem_;
  OpKind kind_;
};

// A_NN = Q_G^T B(z) Q_G, B = T^T - T (L) or T^T T (M).
class BankOperator final : public OperatorComponent {
 public:
  BankOperator(ParamStore& store, const std::string& prefix, OpKind kind, int k, int d, const LayerSpec& ls);
  std::string kind() const override { return "bank-net"; }
  void init(ParamStore& store, Rng& rng) const override;
  Var apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const override;
  int factor_dim() const override { return kind_ == OpKind::kM ? bank_.k() : 0; }
  Var factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const override;

  const SkewBank& bank() const { return bank_; }
  const TriangularNet& tri() const { return tri_; }

 private:
  OpKind kind_;
  SkewBank bank_;
  TriangularNet tri_;
};

// ---- the assembled model --------------------------------------------------------

class GenericModel final : public Model {
 public:
  GenericModel(std::shared_ptr<const Problem> problem, const ModelSpec& spec);

  void init(std::uint64_t seed) override;
  Var drift(const Ctx& ctx, const Var& Z) const override;
  int noise_dim() const override;
  Var noise(const Ctx& ctx, const Var& Z, const Var& Xi) const override;
  Var diffusion_column(const Ctx& ctx, const Var& Z, int k) const override;
  Var penalty(const Ctx& ctx, const Var& Z) const override;

  const ScalarComponent& energy() const { return *e_; }
  const ScalarComponent& entropy() const { return *s_; }
  const OperatorComponent& op_l() const { return *l_; }
  const OperatorComponent& op_m() const { return *m_; }

  struct Terms {
    Var grad_e;
    Var grad_s;
    Var rhs;  // L grad E + M grad S
  };
  Terms terms(const Ctx& ctx, const Var& Z) const;
  // Column k of M(z) for every state of the batch.
  Var m_column(const Ctx& ctx, const Var& Z, const Var& grad_e, int k) const;
  // Exact divergence sum_k dM_ik/dz_k by forward differentiation of each
  // column along its own coordinate.
  Var divergence_m(const Ctx& ctx, const Var& Z, const Var& grad_e) const;

 private:
  std::unique_ptr<ScalarComponent> e_;
  std::unique_ptr<ScalarComponent> s_;
  std::unique_ptr<OperatorComponent> l_;
  std::unique_ptr<OperatorComponent> m_;
};

std::unique_ptr<Model> build_model(std::shared_ptr<const Problem> problem, const ModelSpec& spec);

// Validates a method/case/problem combination; returns every violation.
std::vector<std::string> validate_model_spec(const Problem& problem, const ModelSpec& spec);

struct MethodCase {
  std::string method;
  std::string case_tag;
};
// Every learned (method, case) pair that is valid for the problem.
std::vector<MethodCase> method_cases(const Problem& problem);

// Numeric convenience: evaluate on a scratch tape.
Matrix eval_drift(const Model& model, const Matrix& Z);

// Dense view of a structured model at one state.
struct ModelSnapshot {
  double e = 0.0;
  double s = 0.0;
  Vector grad_e;
  Vector grad_s;
  Matrix l;
  Matrix m;
};
ModelSnapshot snapshot(const GenericModel& model, const Vector& z);

// Unit tangent along coordinate k for a d x B batch.
Var unit_lanes(ad::Tape& tape, Index d, Index B, Index k);

}  // namespace gfinn
