#pragma once

// Parameter storage and the network building blocks: scalar MLPs, banks of
// skew-symmetric matrices and lower-triangular matrix-valued networks.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gfinn/ad/tape.hpp"

namespace gfinn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using ad::Var;

// Flat parameter vector with a named-slice layout. Each slice is a matrix
// stored column-major.
class ParamStore {
 public:
  struct Slice {
    std::string name;
    Index offset = 0;
    Index rows = 0;
    Index cols = 0;
  };

  int add(const std::string& name, Index rows, Index cols);
  int find(const std::string& name) const;  // -1 when absent

  Index size() const { return values_.size(); }
  const std::vector<Slice>& slices() const { return slices_; }
  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

  Eigen::Map<Matrix> slice(int i);
  Eigen::Map<const Matrix> slice(int i) const;

 private:
  std::vector<Slice> slices_;
  Vector values_;
};

// Tape leaves for every slice of a ParamStore, plus the tape they live on.
struct Ctx {
  ad::Tape& tape;
  std::vector<Var> params;

  Ctx(ad::Tape& t, const ParamStore& store);
  const Var& operator[](int slice) const { return params[static_cast<std::size_t>(slice)]; }
  // Gradient of a scalar node with respect to all parameters, flattened in
  // ParamStore order.
  Vector grad(const Var& loss) const;
};

using Rng = std::mt19937_64;

// Independent stream for (master seed, index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct MlpSpec {
  int in = 1;
  int out = 1;
  int layers = 1;  // number of affine maps; layers - 1 tanh hidden layers
  int width = 30;
};

// Value and derivatives of the activation, evaluated together.
struct DualActivation {
  double value;
  double d1;
  double d2;
};
DualActivation tanh_dual(double x);

class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }
  int num_layers() const { return static_cast<int>(w_.size()); }
  int weight_slice(int layer) const { return w_[static_cast<std::size_t>(layer)]; }
  int bias_slice(int layer) const { return b_[static_cast<std::size_t>(layer)]; }

  // Glorot-uniform weights, zero biases.
  void init(ParamStore& store, Rng& rng) const;

  // X is in x B; returns out x B.
  Var forward(const Ctx& ctx, const Var& X) const;
  // Scalar networks: value (1 x B) and input gradient (in x B) built as tape
  // nodes, so the gradient can be differentiated again.
  std::pair<Var, Var> value_and_grad(const Ctx& ctx, const Var& X) const;

  // Plain numeric evaluation.
  Matrix eval(const ParamStore& store, const Matrix& X) const;
  Matrix input_grad(const ParamStore& store, const Matrix& X) const;

 private:
  MlpSpec spec_;
  std::vector<int> w_;
  std::vector<int> b_;
};

// Free skew entries start uniform on +-kSkewInitBound.
inline constexpr double kSkewInitBound = 0.1;

// K skew-symmetric d x d matrices, d(d-1)/2 free entries each (strict upper
// triangle, row-major).
class SkewBank {
 public:
  SkewBank() = default;
  SkewBank(ParamStore& store, const std::string& name, int k, int d);

  int k() const { return k_; }
  int d() const { return d_; }
  int slice() const { return slice_; }
  void init(ParamStore& store, Rng& rng) const;

  // Stacked bank [S_1; ...; S_K] as a Kd x d node.
  Var stacked(const Ctx& ctx) const;
  // Rows of Q_g stacked as columns: block j of the Kd x B result is S_j g.
  Var project(const Ctx& ctx, const Var& G) const;

  // Q_g, the K x d matrix with rows (S_j g)^T.
  Matrix q_matrix(const ParamStore& store, const Vector& g) const;
  Matrix matrix(const ParamStore& store, int j) const;

 private:
  int k_ = 0;
  int d_ = 0;
  int slice_ = -1;
  ad::LinearMapPtr fill_;
};

// Q_g v for P = project(G): K x B.
Var bank_apply(const Var& P, const Var& V, Index d);
// Q_g^T w for P = project(G): d x B.
Var bank_apply_t(const Var& P, const Var& W, Index k);

// MLP whose K(K+1)/2 outputs fill the lower triangle of a K x K matrix,
// row-major: entry (i, j), j <= i, is output i(i+1)/2 + j.
class TriangularNet {
 public:
  TriangularNet() = default;
  TriangularNet(ParamStore& store, const std::string& prefix, int k, const MlpSpec& body);

  int k() const { return k_; }
  const Mlp& mlp() const { return mlp_; }
  void init(ParamStore& store, Rng& rng) const { mlp_.init(store, rng); }

  Var entries(const Ctx& ctx, const Var& Z) const;  // K(K+1)/2 x B
  Var apply(const Var& T, const Var& U) const;      // T u, K x B
  Var apply_t(const Var& T, const Var& U) const;    // T^T u, K x B

  Matrix eval(const ParamStore& store, const Vector& z) const;

 private:
  int k_ = 0;
  Mlp mlp_;
  ad::LinearMapPtr spread_col_;  // u_j -> packed (i, j)
  ad::LinearMapPtr spread_row_;  // u_i -> packed (i, j)
  ad::LinearMapPtr gather_row_;  // packed (i, j) -> i
  ad::LinearMapPtr gather_col_;  // packed (i, j) -> j
};

inline int packed_index(int i, int j) { return i * (i + 1) / 2 + j; }

}  // namespace gfinn
