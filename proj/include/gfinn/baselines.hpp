#pragma once

// Comparison methods: bracket-parameterized operators (GNODE), the soft-penalty
// loss term (SPNN) and unconstrained drift/diffusion networks (SDENet).

#include "gfinn/generic.hpp"

namespace gfinn {

// L_ab = sum_c xi_abc G_c with xi totally antisymmetric, stored by its
// entries with a < b < c.
class GnodeL final : public OperatorComponent {
 public:
  GnodeL(ParamStore& store, const std::string& name, int d);
  std::string kind() const override { return "gnode-xi"; }
  void init(ParamStore& store, Rng& rng) const override;
  Var apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const override;

  int slice() const { return slice_; }
  // Dense xi_abc (index a*d*d + b*d + c).
  std::vector<double> tensor(const ParamStore& store) const;

 private:
  int d_;
  int slice_;
  ad::LinearMapPtr fill_;  // params -> d x d^2 matrix Xi(a, b*d + c)
};

// M = R^T D R with rows of R equal to (Lambda^m G)^T and D = C^T C.
class GnodeM final : public OperatorComponent {
 public:
  GnodeM(ParamStore& store, const std::string& prefix, int k, int d);
  std::string kind() const override { return "gnode-lambda"; }
  void init(ParamStore& store, Rng& rng) const override;
  Var apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const override;
  int factor_dim() const override { return bank_.k(); }
  Var factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const override;

 private:
  SkewBank bank_;
  int c_slice_;
};

// Squared degeneracy residuals mean(|L grad S|^2 + |M grad E|^2) over a batch.
Var degeneracy_penalty(const GenericModel& model, const Ctx& ctx, const Var& Z);

class SdeNetModel final : public Model {
 public:
  SdeNetModel(std::shared_ptr<const Problem> problem, const ModelSpec& spec);

  void init(std::uint64_t seed) override;
  Var drift(const Ctx& ctx, const Var& Z) const override;
  int noise_dim() const override { return k_; }
  Var noise(const Ctx& ctx, const Var& Z, const Var& Xi) const override;
  Var diffusion_column(const Ctx& ctx, const Var& Z, int k) const override;

  // sigma(z) as a d x K matrix at one state.
  Matrix sigma_matrix(const Vector& z) const;

 private:
  int k_;
  Mlp mu_;
  Mlp sigma_;
};

}  // namespace gfinn
