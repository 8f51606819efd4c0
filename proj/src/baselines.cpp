#include "gfinn/baselines.hpp"

#include <array>
#include <cmath>

#include "gfinn/error.hpp"

namespace gfinn {

namespace {

void fill_uniform(Eigen::Map<Matrix> m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index c = 0; c < m.cols(); ++c) {
    for (Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  }
}

}  // namespace

// ---- GNODE -------------------------------------------------------------------------

GnodeL::GnodeL(ParamStore& store, const std::string& name, int d) : d_(d) {
  const int count = d * (d - 1) * (d - 2) / 6;
  if (count <= 0) throw ConfigError("antisymmetric 3-tensor needs d >= 3");
  slice_ = store.add(name, count, 1);
  std::vector<ad::LinearMap::Term> terms;
  const Index rows = d;
  int e = 0;
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      for (int c = b + 1; c < d; ++c, ++e) {
        const std::array<std::array<int, 4>, 6> perms{{{a, b, c, 1},
                                                       {b, c, a, 1},
                                                       {c, a, b, 1},
                                                       {b, a, c, -1},
                                                       {a, c, b, -1},
                                                       {c, b, a, -1}}};
        for (const auto& p : perms) {
          const Index col = static_cast<Index>(p[1]) * d + p[2];
          terms.push_back({p[0] + col * rows, e, static_cast<double>(p[3])});
        }
      }
    }
  }
  fill_ = ad::make_linear_map(count, 1, d, static_cast<Index>(d) * d, std::move(terms));
}

void GnodeL::init(ParamStore& store, Rng& rng) const {
  fill_uniform(store.slice(slice_), std::sqrt(6.0 / (2.0 * d_)), rng);
}

Var GnodeL::apply(const Ctx& ctx, const Var&, const Var& G, const Var& V) const {
  const Var xi = ad::entry_map(ctx[slice_], fill_);
  return ad::matmul(xi, ad::repeat_each(V, d_) * ad::tile_rows(G, d_));
}

std::vector<double> GnodeL::tensor(const ParamStore& store) const {
  const auto p = store.slice(slice_);
  const Matrix xi = [&] {
    Matrix m = Matrix::Zero(d_, static_cast<Index>(d_) * d_);
    for (const auto& t : fill_->terms) m.data()[t.out] += t.coef * p.data()[t.in];
    return m;
  }();
  std::vector<double> out(static_cast<std::size_t>(d_) * d_ * d_);
  for (int a = 0; a < d_; ++a) {
    for (int bc = 0; bc < d_ * d_; ++bc) out[static_cast<std::size_t>(a * d_ * d_ + bc)] = xi(a, bc);
  }
  return out;
}

GnodeM::GnodeM(ParamStore& store, const std::string& prefix, int k, int d)
    : bank_(store, prefix + ".Lambda", k, d), c_slice_(store.add(prefix + ".C", k, k)) {}

void GnodeM::init(ParamStore& store, Rng& rng) const {
  bank_.init(store, rng);
  fill_uniform(store.slice(c_slice_), std::sqrt(6.0 / (2.0 * bank_.k())), rng);
}

Var GnodeM::apply(const Ctx& ctx, const Var&, const Var& G, const Var& V) const {
  const Var P = bank_.project(ctx, G);
  const Var u = bank_apply(P, V, bank_.d());
  const Var& C = ctx[c_slice_];
  const Var w = ad::matmul(ad::transpose(C), ad::matmul(C, u));
  return bank_apply_t(P, w, bank_.k());
}

Var GnodeM::factor_apply(const Ctx& ctx, const Var&, const Var& G, const Var& Xi) const {
  const Var P = bank_.project(ctx, G);
  return bank_apply_t(P, ad::matmul(ad::transpose(ctx[c_slice_]), Xi), bank_.k());
}

// ---- SPNN --------------------------------------------------------------------------

Var degeneracy_penalty(const GenericModel& model, const Ctx& ctx, const Var& Z) {
  const Var ge = model.energy().grad(ctx, Z);
  const Var gs = model.entropy().grad(ctx, Z);
  const Var r1 = model.op_l().apply(ctx, Z, gs, gs);
  const Var r2 = model.op_m().apply(ctx, Z, ge, ge);
  return ad::sum(r1 * r1 + r2 * r2) / static_cast<double>(Z.cols());
}

// ---- SDENet ------------------------------------------------------------------------

SdeNetModel::SdeNetModel(std::shared_ptr<const Problem> problem, const ModelSpec& spec)
    : Model(std::move(problem)) {
  spec_ = spec;
  const int d = problem_->dim();
  k_ = spec.sdenet_noise_dim > 0 ? spec.sdenet_noise_dim : d;
  mu_ = Mlp(params_, "mu", MlpSpec{d, d, spec.mu.layers, spec.mu.width});
  sigma_ = Mlp(params_, "sigma", MlpSpec{d, d * k_, spec.sigma.layers, spec.sigma.width});
}

void SdeNetModel::init(std::uint64_t seed) {
  Rng rng(seed);
  mu_.init(params_, rng);
  sigma_.init(params_, rng);
}

Var SdeNetModel::drift(const Ctx& ctx, const Var& Z) const { return mu_.forward(ctx, Z); }

Var SdeNetModel::noise(const Ctx& ctx, const Var& Z, const Var& Xi) const {
  const Var s = sigma_.forward(ctx, Z);
  return ad::group_sum(s * ad::tile_rows(Xi, dim()), k_);
}

Var SdeNetModel::diffusion_column(const Ctx& ctx, const Var& Z, int k) const {
  const Var s = sigma_.forward(ctx, Z);
  const Var row_k = ad::rows(s, static_cast<Index>(k) * k_, k_);
  return ad::group_sum(s * ad::tile_rows(row_k, dim()), k_);
}

Matrix SdeNetModel::sigma_matrix(const Vector& z) const {
  const Matrix s = sigma_.eval(params_, z);
  Matrix out(dim(), k_);
  for (int a = 0; a < dim(); ++a) {
    for (int k = 0; k < k_; ++k) out(a, k) = s(a * k_ + k, 0);
  }
  return out;
}

}  // namespace gfinn
