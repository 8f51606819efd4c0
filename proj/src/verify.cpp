#include "gfinn/verify.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>

#include "gfinn/error.hpp"

namespace gfinn {

StructureStats structure_stats(const GenericModel& model, const Matrix& Z) {
  const Index d = Z.rows(), n = Z.cols();
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  const Var z = tape.leaf(Z);
  const Var ge = model.energy().grad(ctx, z);
  const Var gs = model.entropy().grad(ctx, z);
  std::vector<Matrix> lcol, mcol;
  for (Index k = 0; k < d; ++k) {
    const Var e = unit_lanes(tape, d, n, k);
    lcol.push_back(model.op_l().apply(ctx, z, gs, e).value());
    mcol.push_back(model.op_m().apply(ctx, z, ge, e).value());
  }
  const Matrix& GE = ge.value();
  const Matrix& GS = gs.value();
  StructureStats st;
  st.states = n;
  Matrix L(d, d), M(d, d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  for (Index c = 0; c < n; ++c) {
    for (Index k = 0; k < d; ++k) {
      L.col(k) = lcol[static_cast<std::size_t>(k)].col(c);
      M.col(k) = mcol[static_cast<std::size_t>(k)].col(c);
    }
    st.skew = std::max(st.skew, (L + L.transpose()).cwiseAbs().maxCoeff());
    eig.compute(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    st.min_eig = std::min(st.min_eig, eig.eigenvalues().minCoeff());
    st.degeneracy_l = std::max(st.degeneracy_l, (L * GS.col(c)).cwiseAbs().maxCoeff() / (1.0 + GS.col(c).norm()));
    st.degeneracy_m = std::max(st.degeneracy_m, (M * GE.col(c)).cwiseAbs().maxCoeff() / (1.0 + GE.col(c).norm()));
  }
  return st;
}

bool StructureCheck::passed() const {
  if (!(worst.skew <= 1e-12) || !(worst.min_eig >= -1e-10)) return false;
  return !degeneracy_required || (worst.degeneracy_l <= 1e-10 && worst.degeneracy_m <= 1e-10);
}

std::vector<StructureCheck> structure_sweep(const std::string& problem, int draws, int states, std::uint64_t seed) {
  if (draws < 1 || states < 1) throw ConfigError("structure sweep needs draws >= 1 and states >= 1");
  std::shared_ptr<const Problem> p = make_problem(problem);
  std::vector<StructureCheck> out;
  std::uint64_t combo = 0;
  for (const auto& mc : method_cases(*p)) {
    if (mc.method == "sdenet") continue;
    StructureCheck check{problem, mc.method, mc.case_tag, {}, draws, mc.method != "spnn"};
    auto model = build_model(p, default_model_spec(problem, mc.method, mc.case_tag));
    const auto& gm = dynamic_cast<const GenericModel&>(*model);
    for (int r = 0; r < draws; ++r) {
      const std::uint64_t s = derive_seed(derive_seed(seed, combo), static_cast<std::uint64_t>(r));
      model->init(s);
      Rng rng(derive_seed(s, 1));
      const StructureStats st = structure_stats(gm, p->sample_initial(rng, states));
      check.worst.skew = std::max(check.worst.skew, st.skew);
      check.worst.min_eig = std::min(check.worst.min_eig, st.min_eig);
      check.worst.degeneracy_l = std::max(check.worst.degeneracy_l, st.degeneracy_l);
      check.worst.degeneracy_m = std::max(check.worst.degeneracy_m, st.degeneracy_m);
      check.worst.states += st.states;
    }
    out.push_back(check);
    ++combo;
  }
  return out;
}

CertificateSweep certificate_sweep(const std::string& problem, int states, std::uint64_t seed, double tol) {
  const auto p = make_problem(problem);
  Rng rng(seed);
  const Matrix Z = p->sample_initial(rng, states);
  CertificateSweep out;
  out.problem = problem;
  out.states = states;
  for (Index c = 0; c < Z.cols(); ++c) {
    const CertificateReport rep = kernel_certificate(*p, Z.col(c), tol);
    out.membership = std::max(out.membership, rep.membership_residual);
    out.orthonormality = std::max(out.orthonormality, rep.orthonormality_residual);
    out.factorization = std::max(out.factorization, rep.factorization_residual);
    if (rep.passed()) {
      ++out.passed;
    } else if (out.first_failure.empty()) {
      out.first_failure = rep.failure;
    }
  }
  return out;
}

}  // namespace gfinn
