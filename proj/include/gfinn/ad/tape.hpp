#pragma once

// Reverse-mode differentiation on a dynamically built tape of dense matrices.
//
// Every node holds an Eigen matrix. Batched evaluation puts samples in columns,
// so a d x B node is a batch of B state vectors and a 1 x B node is a "lane"
// carrying one scalar per sample.
//
// grad() and jvp() record their work as ordinary nodes on the same tape, so any
// derivative they return can be differentiated again. grad_values() is the
// cheap numeric-only reverse pass used for the final parameter gradient.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

namespace gfinn::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Sparse linear map: out[t] += coef * in[s].
// For row maps, t and s are row indices and every column is mapped alike.
// For entry maps, t and s are column-major linear indices.
struct LinearMap {
  struct Term {
    Index out;
    Index in;
    double coef;
  };
  Index in_rows = 0;
  Index in_cols = 0;
  Index out_rows = 0;
  Index out_cols = 0;
  std::vector<Term> terms;
  const LinearMap* adjoint = nullptr;
};
using LinearMapPtr = std::shared_ptr<const LinearMap>;

// Builds the map and its adjoint in a single allocation.
LinearMapPtr make_linear_map(Index in_rows, Index in_cols, Index out_rows, Index out_cols,
                             std::vector<LinearMap::Term> terms);
LinearMapPtr adjoint_of(const LinearMapPtr& map);

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddConst,
  kMatMul,
  kTranspose,
  kTanh,
  kExp,
  kLog,
  kPow,
  kBroadcastCols,
  kSumCols,
  kBroadcastRows,
  kSumRows,
  kSum,
  kBroadcastAll,
  kRowMap,
  kEntryMap,
  kVStack,
};

const char* op_name(OpKind op);

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const;
  Tape& tape() const;
  int id() const { return id_; }
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id, std::uint64_t generation) : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var constant(Index rows, Index cols, double fill);

  std::size_t size() const { return nodes_.size(); }
  OpKind op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  std::vector<int> parents(int id) const;
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(int id) const { return nodes_[static_cast<std::size_t>(id)].scalar; }
  const LinearMapPtr& map(int id) const { return nodes_[static_cast<std::size_t>(id)].map; }

  // Drops every node; Vars created before the call become stale.
  void clear();

  // Reverse mode with the result recorded on the tape (differentiable again).
  // y must be 1x1.
  std::vector<Var> grad(const Var& y, std::span<const Var> wrt);
  // Vector-Jacobian product for a non-scalar y with cotangent seed (same shape as y).
  std::vector<Var> vjp(const Var& y, const Var& seed, std::span<const Var> wrt);
  // Reverse mode computing values only. y must be 1x1.
  std::vector<Matrix> grad_values(const Var& y, std::span<const Var> wrt) const;

  // Forward mode: directional derivatives of outputs along tangents attached to
  // inputs, recorded on the tape.
  std::vector<Var> jvp(std::span<const Var> outputs, std::span<const Var> inputs,
                       std::span<const Var> tangents);

  // Node construction; used by the free-function operators below.
  Var push(OpKind op, std::initializer_list<int> args, Matrix value, double scalar = 0.0,
           LinearMapPtr map = nullptr);
  Var push_vstack(const std::vector<int>& args, Matrix value);
  Var var(int id) { return Var(this, id, generation_); }
  void check(const Var& v) const;
  int next_id() const { return static_cast<int>(nodes_.size()); }

 private:
  friend class Var;
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<int> args;
    double scalar = 0.0;
    LinearMapPtr map;
    Matrix value;
  };

  std::vector<Node> nodes_;
  std::uint64_t generation_;
};

// ---- element-wise and algebraic operators ----------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);  // element-wise
Var operator/(const Var& a, const Var& b);  // element-wise
Var operator-(const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);
Var operator*(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator/(const Var& a, double c);
Var operator/(double c, const Var& a);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var pow(const Var& a, double p);
Var sqrt(const Var& a);
Var square(const Var& a);

// ---- shape operators --------------------------------------------------------

Var sum(const Var& a);                          // -> 1x1
Var sum_cols(const Var& a);                     // r x c -> r x 1
Var sum_rows(const Var& a);                     // r x c -> 1 x c
Var broadcast_cols(const Var& a, Index cols);   // r x 1 -> r x cols
Var broadcast_rows(const Var& a, Index rows);   // 1 x c -> rows x c
Var broadcast_all(const Var& a, Index rows, Index cols);  // 1x1 -> rows x cols
Var row_map(const Var& a, const LinearMapPtr& map);
Var entry_map(const Var& a, const LinearMapPtr& map);
Var vstack(std::span<const Var> parts);
Var vstack(std::initializer_list<Var> parts);

Var rows(const Var& a, Index start, Index count);
Var row(const Var& a, Index i);
// [a; a; ...; a] (k copies).
Var tile_rows(const Var& a, Index k);
// Sum of k consecutive row blocks of equal height; adjoint of tile_rows.
Var fold_blocks(const Var& a, Index k);
// Each row repeated k times in place.
Var repeat_each(const Var& a, Index k);
// Sum of each group of k consecutive rows; adjoint of repeat_each.
Var group_sum(const Var& a, Index k);

// Constant node with the shape of a, filled with c.
Var constant_like(const Var& a, double c);

// Splits a d x B node into d lanes of shape 1 x B.
std::vector<Var> lanes(const Var& a);

}  // namespace gfinn::ad
