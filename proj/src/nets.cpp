#include "gfinn/nets.hpp"

#include <cmath>

#include "gfinn/error.hpp"

namespace gfinn {

int ParamStore::add(const std::string& name, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw ConfigError("parameter slice '" + name + "' has zero size");
  if (find(name) >= 0) throw ConfigError("duplicate parameter slice '" + name + "'");
  Slice s{name, values_.size(), rows, cols};
  const Index old = values_.size();
  values_.conservativeResize(old + rows * cols);
  values_.tail(rows * cols).setZero();
  slices_.push_back(s);
  return static_cast<int>(slices_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    if (slices_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Eigen::Map<Matrix> ParamStore::slice(int i) {
  const Slice& s = slices_.at(static_cast<std::size_t>(i));
  return Eigen::Map<Matrix>(values_.data() + s.offset, s.rows, s.cols);
}

Eigen::Map<const Matrix> ParamStore::slice(int i) const {
  const Slice& s = slices_.at(static_cast<std::size_t>(i));
  return Eigen::Map<const Matrix>(values_.data() + s.offset, s.rows, s.cols);
}

Ctx::Ctx(ad::Tape& t, const ParamStore& store) : tape(t) {
  params.reserve(store.slices().size());
  for (std::size_t i = 0; i < store.slices().size(); ++i) {
    params.push_back(tape.leaf(store.slice(static_cast<int>(i))));
  }
}

Vector Ctx::grad(const Var& loss) const {
  const std::vector<Matrix> g = tape.grad_values(loss, params);
  Index total = 0;
  for (const auto& m : g) total += m.size();
  Vector out(total);
  Index off = 0;
  for (const auto& m : g) {
    out.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the pair
  std::uint64_t x = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

DualActivation tanh_dual(double x) {
  const double y = std::tanh(x);
  const double d1 = 1.0 - y * y;
  return {y, d1, -2.0 * y * d1};
}

// ---- Mlp ---------------------------------------------------------------------

Mlp::Mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec) : spec_(spec) {
  if (spec.in <= 0 || spec.out <= 0 || spec.layers <= 0 || (spec.layers > 1 && spec.width <= 0)) {
    throw ConfigError("network '" + prefix + "' has a zero width or depth");
  }
  int fan_in = spec.in;
  for (int l = 0; l < spec.layers; ++l) {
    const int fan_out = l + 1 == spec.layers ? spec.out : spec.width;
    w_.push_back(store.add(prefix + ".W" + std::to_string(l), fan_out, fan_in));
    b_.push_back(store.add(prefix + ".b" + std::to_string(l), fan_out, 1));
    fan_in = fan_out;
  }
}

void Mlp::init(ParamStore& store, Rng& rng) const {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    auto W = store.slice(w_[l]);
    const double bound = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index c = 0; c < W.cols(); ++c) {
      for (Index r = 0; r < W.rows(); ++r) W(r, c) = u(rng);
    }
    store.slice(b_[l]).setZero();
  }
}

Var Mlp::forward(const Ctx& ctx, const Var& X) const {
  if (X.rows() != spec_.in) {
    throw ConfigError("network input has " + std::to_string(X.rows()) + " rows, expected " +
                      std::to_string(spec_.in));
  }
  const Index B = X.cols();
  Var h = X;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Var a = ad::matmul(ctx[w_[l]], h) + ad::broadcast_cols(ctx[b_[l]], B);
    h = l + 1 == w_.size() ? a : ad::tanh(a);
  }
  return h;
}

std::pair<Var, Var> Mlp::value_and_grad(const Ctx& ctx, const Var& X) const {
  if (spec_.out != 1) throw ContractError("input gradient requested for a non-scalar network");
  if (X.rows() != spec_.in) {
    throw ConfigError("network input has " + std::to_string(X.rows()) + " rows, expected " +
                      std::to_string(spec_.in));
  }
  const Index B = X.cols();
  std::vector<Var> hidden;
  Var h = X;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Var a = ad::matmul(ctx[w_[l]], h) + ad::broadcast_cols(ctx[b_[l]], B);
    if (l + 1 == w_.size()) {
      h = a;
    } else {
      h = ad::tanh(a);
      hidden.push_back(h);
    }
  }
  // (W^L D_{L-1} ... D_1 W^1)^T with D_l = diag(1 - h_l^2)
  Var g = ad::broadcast_cols(ad::transpose(ctx[w_.back()]), B);
  for (std::size_t l = w_.size() - 1; l-- > 0;) {
    const Var& y = hidden[l];
    g = ad::matmul(ad::transpose(ctx[w_[l]]), g * (1.0 - y * y));
  }
  return {h, g};
}

Matrix Mlp::eval(const ParamStore& store, const Matrix& X) const {
  Matrix h = X;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Matrix a = store.slice(w_[l]) * h;
    a.colwise() += store.slice(b_[l]).col(0);
    h = l + 1 == w_.size() ? a : Matrix(a.array().tanh());
  }
  return h;
}

Matrix Mlp::input_grad(const ParamStore& store, const Matrix& X) const {
  if (spec_.out != 1) throw ContractError("input gradient requested for a non-scalar network");
  std::vector<Matrix> d1;
  Matrix h = X;
  for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
    Matrix a = store.slice(w_[l]) * h;
    a.colwise() += store.slice(b_[l]).col(0);
    h = a.array().tanh();
    d1.push_back((1.0 - h.array().square()).matrix());
  }
  Matrix g = store.slice(w_.back()).transpose().replicate(1, X.cols());
  for (std::size_t l = w_.size() - 1; l-- > 0;) {
    g = store.slice(w_[l]).transpose() * g.cwiseProduct(d1[l]);
  }
  return g;
}

// ---- SkewBank ------------------------------------------------------------------

SkewBank::SkewBank(ParamStore& store, const std::string& name, int k, int d) : k_(k), d_(d) {
  if (k <= 0 || d < 2) throw ConfigError("skew bank '" + name + "' needs K >= 1 and d >= 2");
  const int free = d * (d - 1) / 2;
  slice_ = store.add(name, k, free);
  // entry (j, e) of the K x free parameter matrix feeds (j*d + a, b) and
  // (j*d + b, a) of the Kd x d stack, column-major
  std::vector<ad::LinearMap::Term> terms;
  const Index rows = static_cast<Index>(k) * d;
  for (int j = 0; j < k; ++j) {
    int e = 0;
    for (int a = 0; a < d; ++a) {
      for (int b = a + 1; b < d; ++b, ++e) {
        const Index src = j + static_cast<Index>(e) * k;
        terms.push_back({(j * d + a) + static_cast<Index>(b) * rows, src, 1.0});
        terms.push_back({(j * d + b) + static_cast<Index>(a) * rows, src, -1.0});
      }
    }
  }
  fill_ = ad::make_linear_map(k, free, rows, d, std::move(terms));
}

void SkewBank::init(ParamStore& store, Rng& rng) const {
  auto P = store.slice(slice_);
  const double bound = kSkewInitBound;
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index c = 0; c < P.cols(); ++c) {
    for (Index r = 0; r < P.rows(); ++r) P(r, c) = u(rng);
  }
}

Var SkewBank::stacked(const Ctx& ctx) const { return ad::entry_map(ctx[slice_], fill_); }

Var SkewBank::project(const Ctx& ctx, const Var& G) const {
  if (G.rows() != d_) throw ContractError("skew bank applied to a vector of the wrong length");
  return ad::matmul(stacked(ctx), G);
}

Matrix SkewBank::matrix(const ParamStore& store, int j) const {
  const auto P = store.slice(slice_);
  Matrix S = Matrix::Zero(d_, d_);
  int e = 0;
  for (int a = 0; a < d_; ++a) {
    for (int b = a + 1; b < d_; ++b, ++e) {
      S(a, b) = P(j, e);
      S(b, a) = -P(j, e);
    }
  }
  return S;
}

Matrix SkewBank::q_matrix(const ParamStore& store, const Vector& g) const {
  if (g.size() != d_) throw ContractError("skew bank applied to a vector of the wrong length");
  Matrix Q(k_, d_);
  for (int j = 0; j < k_; ++j) Q.row(j) = (matrix(store, j) * g).transpose();
  return Q;
}

Var bank_apply(const Var& P, const Var& V, Index d) {
  const Index k = P.rows() / d;
  return ad::group_sum(P * ad::tile_rows(V, k), d);
}

Var bank_apply_t(const Var& P, const Var& W, Index k) {
  const Index d = P.rows() / k;
  return ad::fold_blocks(P * ad::repeat_each(W, d), k);
}

// ---- TriangularNet -------------------------------------------------------------

TriangularNet::TriangularNet(ParamStore& store, const std::string& prefix, int k, const MlpSpec& body)
    : k_(k) {
  if (k <= 0) throw ConfigError("triangular net '" + prefix + "' needs K >= 1");
  MlpSpec spec = body;
  spec.out = k * (k + 1) / 2;
  mlp_ = Mlp(store, prefix, spec);
  const Index n = spec.out;
  std::vector<ad::LinearMap::Term> sc, sr, gr, gc;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j <= i; ++j) {
      const Index p = packed_index(i, j);
      sc.push_back({p, j, 1.0});
      sr.push_back({p, i, 1.0});
      gr.push_back({i, p, 1.0});
      gc.push_back({j, p, 1.0});
    }
  }
  spread_col_ = ad::make_linear_map(k, 0, n, 0, std::move(sc));
  spread_row_ = ad::make_linear_map(k, 0, n, 0, std::move(sr));
  gather_row_ = ad::make_linear_map(n, 0, k, 0, std::move(gr));
  gather_col_ = ad::make_linear_map(n, 0, k, 0, std::move(gc));
}

Var TriangularNet::entries(const Ctx& ctx, const Var& Z) const { return mlp_.forward(ctx, Z); }

Var TriangularNet::apply(const Var& T, const Var& U) const {
  return ad::row_map(T * ad::row_map(U, spread_col_), gather_row_);
}

Var TriangularNet::apply_t(const Var& T, const Var& U) const {
  return ad::row_map(T * ad::row_map(U, spread_row_), gather_col_);
}

Matrix TriangularNet::eval(const ParamStore& store, const Vector& z) const {
  const Matrix t = mlp_.eval(store, z);
  Matrix T = Matrix::Zero(k_, k_);
  for (int i = 0; i < k_; ++i) {
    for (int j = 0; j <= i; ++j) T(i, j) = t(packed_index(i, j), 0);
  }
  return T;
}

}  // namespace gfinn
