#include "gfinn/ad/tape.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <sstream>
#include <string>

#include "gfinn/error.hpp"

namespace gfinn::ad {

namespace {

std::atomic<std::uint64_t> g_generation{1};

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_error(int node, OpKind op, const std::string& detail) {
  std::ostringstream os;
  os << "node " << node << " (" << op_name(op) << "): " << detail;
  throw ConfigError(os.str());
}

void require_same_shape(const Var& a, const Var& b, OpKind op) {
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    shape_error(a.tape().next_id(), op, "operand shapes " + shape(x) + " and " + shape(y));
  }
}

Tape& common_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  t.check(b);
  return t;
}

Matrix apply_row_map(const LinearMap& map, const Matrix& in) {
  Matrix out = Matrix::Zero(map.out_rows, in.cols());
  for (const auto& t : map.terms) {
    out.row(t.out) += t.coef * in.row(t.in);
  }
  return out;
}

Matrix apply_entry_map(const LinearMap& map, const Matrix& in) {
  Matrix out = Matrix::Zero(map.out_rows, map.out_cols);
  const double* src = in.data();
  double* dst = out.data();
  for (const auto& t : map.terms) {
    dst[t.out] += t.coef * src[t.in];
  }
  return out;
}

struct MapPair {
  LinearMap forward;
  LinearMap backward;
};

// Numeric adjoint arithmetic.
struct ValueOps {
  using T = Matrix;
  const Tape& tape;

  const Matrix& primal(int id) const { return tape.value(id); }
  Matrix zeros(Index r, Index c) const { return Matrix::Zero(r, c); }
  static Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
  static Matrix neg(const Matrix& a) { return -a; }
  static Matrix mul(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }
  static Matrix div(const Matrix& a, const Matrix& b) { return a.cwiseQuotient(b); }
  static Matrix scale(double c, const Matrix& a) { return c * a; }
  static Matrix matmul_tn(const Matrix& a, const Matrix& b) { return a.transpose() * b; }
  static Matrix matmul_nt(const Matrix& a, const Matrix& b) { return a * b.transpose(); }
  static Matrix transpose(const Matrix& a) { return a.transpose(); }
  static Matrix one_minus_square(const Matrix& y) { return (1.0 - y.array().square()).matrix(); }
  static Matrix pow(const Matrix& a, double p) { return a.array().pow(p).matrix(); }
  static Matrix sum_cols(const Matrix& a) { return a.rowwise().sum(); }
  static Matrix sum_rows(const Matrix& a) { return a.colwise().sum(); }
  static Matrix broadcast_cols(const Matrix& a, Index c) { return a.replicate(1, c); }
  static Matrix broadcast_rows(const Matrix& a, Index r) { return a.replicate(r, 1); }
  static Matrix sum_all(const Matrix& a) { return Matrix::Constant(1, 1, a.sum()); }
  static Matrix broadcast_all(const Matrix& a, Index r, Index c) {
    return Matrix::Constant(r, c, a(0, 0));
  }
  static Matrix row_map(const Matrix& a, const LinearMapPtr& m) { return apply_row_map(*m, a); }
  static Matrix entry_map(const Matrix& a, const LinearMapPtr& m) { return apply_entry_map(*m, a); }
  static Matrix rows(const Matrix& a, Index start, Index count) { return a.middleRows(start, count); }
};

// Adjoint arithmetic recorded on the tape.
struct GraphOps {
  using T = Var;
  Tape& tape;

  Var primal(int id) const { return tape.var(id); }
  Var zeros(Index r, Index c) const { return tape.constant(r, c, 0.0); }
  static Var add(const Var& a, const Var& b) { return a + b; }
  static Var neg(const Var& a) { return -a; }
  static Var mul(const Var& a, const Var& b) { return a * b; }
  static Var div(const Var& a, const Var& b) { return a / b; }
  static Var scale(double c, const Var& a) { return c * a; }
  static Var matmul_tn(const Var& a, const Var& b) { return ad::matmul(ad::transpose(a), b); }
  static Var matmul_nt(const Var& a, const Var& b) { return ad::matmul(a, ad::transpose(b)); }
  static Var transpose(const Var& a) { return ad::transpose(a); }
  static Var one_minus_square(const Var& y) { return 1.0 - y * y; }
  static Var pow(const Var& a, double p) { return ad::pow(a, p); }
  static Var sum_cols(const Var& a) { return ad::sum_cols(a); }
  static Var sum_rows(const Var& a) { return ad::sum_rows(a); }
  static Var broadcast_cols(const Var& a, Index c) { return ad::broadcast_cols(a, c); }
  static Var broadcast_rows(const Var& a, Index r) { return ad::broadcast_rows(a, r); }
  static Var sum_all(const Var& a) { return ad::sum(a); }
  static Var broadcast_all(const Var& a, Index r, Index c) { return ad::broadcast_all(a, r, c); }
  static Var row_map(const Var& a, const LinearMapPtr& m) { return ad::row_map(a, m); }
  static Var entry_map(const Var& a, const LinearMapPtr& m) { return ad::entry_map(a, m); }
  static Var rows(const Var& a, Index start, Index count) { return ad::rows(a, start, count); }
};

// Graph-mode rules append to the tape, which may move node storage, so the
// reverse pass works from a copy of each node.
struct NodeInfo {
  OpKind op;
  std::vector<int> args;
  double scalar;
  LinearMapPtr map;
};

NodeInfo snapshot(const Tape& t, int id) {
  return NodeInfo{t.op(id), t.parents(id), t.scalar(id), t.map(id)};
}

// Feeds the vector-Jacobian contributions of node `self` with adjoint g to
// acc(parent, make_contribution).
template <class Ops, class G, class Acc>
void vjp_rule(Ops& o, const NodeInfo& n, int self, const G& g, Acc&& acc) {
  const auto& args = n.args;
  switch (n.op) {
    case OpKind::kLeaf:
      return;
    case OpKind::kAdd:
      acc(args[0], [&] { return g; });
      acc(args[1], [&] { return g; });
      return;
    case OpKind::kSub:
      acc(args[0], [&] { return g; });
      acc(args[1], [&] { return o.neg(g); });
      return;
    case OpKind::kMul:
      acc(args[0], [&] { return o.mul(g, o.primal(args[1])); });
      acc(args[1], [&] { return o.mul(g, o.primal(args[0])); });
      return;
    case OpKind::kDiv:
      acc(args[0], [&] { return o.div(g, o.primal(args[1])); });
      acc(args[1], [&] { return o.neg(o.div(o.mul(g, o.primal(self)), o.primal(args[1]))); });
      return;
    case OpKind::kNeg:
      acc(args[0], [&] { return o.neg(g); });
      return;
    case OpKind::kScale:
      acc(args[0], [&] { return o.scale(n.scalar, g); });
      return;
    case OpKind::kAddConst:
      acc(args[0], [&] { return g; });
      return;
    case OpKind::kMatMul:
      acc(args[0], [&] { return o.matmul_nt(g, o.primal(args[1])); });
      acc(args[1], [&] { return o.matmul_tn(o.primal(args[0]), g); });
      return;
    case OpKind::kTranspose:
      acc(args[0], [&] { return o.transpose(g); });
      return;
    case OpKind::kTanh:
      acc(args[0], [&] { return o.mul(g, o.one_minus_square(o.primal(self))); });
      return;
    case OpKind::kExp:
      acc(args[0], [&] { return o.mul(g, o.primal(self)); });
      return;
    case OpKind::kLog:
      acc(args[0], [&] { return o.div(g, o.primal(args[0])); });
      return;
    case OpKind::kPow:
      acc(args[0], [&] {
        return o.mul(g, o.scale(n.scalar, o.pow(o.primal(args[0]), n.scalar - 1.0)));
      });
      return;
    case OpKind::kBroadcastCols:
      acc(args[0], [&] { return o.sum_cols(g); });
      return;
    case OpKind::kSumCols:
      acc(args[0], [&] { return o.broadcast_cols(g, o.tape.value(args[0]).cols()); });
      return;
    case OpKind::kBroadcastRows:
      acc(args[0], [&] { return o.sum_rows(g); });
      return;
    case OpKind::kSumRows:
      acc(args[0], [&] { return o.broadcast_rows(g, o.tape.value(args[0]).rows()); });
      return;
    case OpKind::kSum:
      acc(args[0], [&] {
        const Matrix& a = o.tape.value(args[0]);
        return o.broadcast_all(g, a.rows(), a.cols());
      });
      return;
    case OpKind::kBroadcastAll:
      acc(args[0], [&] { return o.sum_all(g); });
      return;
    case OpKind::kRowMap:
      acc(args[0], [&] { return o.row_map(g, adjoint_of(n.map)); });
      return;
    case OpKind::kEntryMap:
      acc(args[0], [&] { return o.entry_map(g, adjoint_of(n.map)); });
      return;
    case OpKind::kVStack: {
      Index offset = 0;
      for (int a : args) {
        const Index h = o.tape.value(a).rows();
        acc(a, [&] { return o.rows(g, offset, h); });
        offset += h;
      }
      return;
    }
  }
}

// dep[i - lo] is set when node i (lo <= i <= hi) depends on one of `sources`.
std::vector<char> forward_dependents(const Tape& tape, int lo, int hi, const std::vector<int>& sources) {
  std::vector<char> dep(static_cast<std::size_t>(hi - lo + 1), 0);
  for (int s : sources) {
    if (s >= lo && s <= hi) dep[static_cast<std::size_t>(s - lo)] = 1;
  }
  for (int i = lo; i <= hi; ++i) {
    auto& d = dep[static_cast<std::size_t>(i - lo)];
    if (d) continue;
    for (int p : tape.parents(i)) {
      if (p >= lo && dep[static_cast<std::size_t>(p - lo)]) {
        d = 1;
        break;
      }
    }
  }
  return dep;
}

template <class Ops>
std::vector<typename Ops::T> reverse_pass(Ops& ops, int y, typename Ops::T seed,
                                          const std::vector<int>& wrt) {
  using T = typename Ops::T;
  const Tape& tape = ops.tape;
  std::vector<T> out;
  if (wrt.empty()) return out;
  const int lo = *std::min_element(wrt.begin(), wrt.end());
  std::vector<std::optional<T>> adj;
  if (lo <= y) {
    const std::vector<char> dep = forward_dependents(tape, lo, y, wrt);
    adj.resize(static_cast<std::size_t>(y - lo + 1));
    if (dep[static_cast<std::size_t>(y - lo)]) adj[static_cast<std::size_t>(y - lo)] = std::move(seed);
    for (int i = y; i >= lo; --i) {
      const auto slot_index = static_cast<std::size_t>(i - lo);
      if (!adj[slot_index] || tape.op(i) == OpKind::kLeaf) continue;
      const T g = *adj[slot_index];
      const NodeInfo info = snapshot(tape, i);
      vjp_rule(ops, info, i, g, [&](int p, auto&& make) {
        if (p < lo || !dep[static_cast<std::size_t>(p - lo)]) return;
        auto& target = adj[static_cast<std::size_t>(p - lo)];
        if (target) {
          target = Ops::add(*target, make());
        } else {
          target = make();
        }
      });
    }
  }
  out.reserve(wrt.size());
  for (int w : wrt) {
    if (w <= y && adj[static_cast<std::size_t>(w - lo)]) {
      out.push_back(*adj[static_cast<std::size_t>(w - lo)]);
    } else {
      const Matrix& v = tape.value(w);
      out.push_back(ops.zeros(v.rows(), v.cols()));
    }
  }
  return out;
}

std::vector<int> ids_of(const Tape& tape, std::span<const Var> vars) {
  std::vector<int> ids;
  ids.reserve(vars.size());
  for (const auto& v : vars) {
    tape.check(v);
    ids.push_back(v.id());
  }
  return ids;
}

LinearMapPtr rows_map(Index in_rows, Index start, Index count) {
  std::vector<LinearMap::Term> terms;
  terms.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) terms.push_back({i, start + i, 1.0});
  return make_linear_map(in_rows, 0, count, 0, std::move(terms));
}

}  // namespace

LinearMapPtr make_linear_map(Index in_rows, Index in_cols, Index out_rows, Index out_cols,
                             std::vector<LinearMap::Term> terms) {
  auto pair = std::make_shared<MapPair>();
  pair->forward.in_rows = in_rows;
  pair->forward.in_cols = in_cols;
  pair->forward.out_rows = out_rows;
  pair->forward.out_cols = out_cols;
  pair->backward.in_rows = out_rows;
  pair->backward.in_cols = out_cols;
  pair->backward.out_rows = in_rows;
  pair->backward.out_cols = in_cols;
  pair->backward.terms.reserve(terms.size());
  for (const auto& t : terms) {
    if (t.out < 0 || t.in < 0) throw ConfigError("linear map term with negative index");
    pair->backward.terms.push_back({t.in, t.out, t.coef});
  }
  pair->forward.terms = std::move(terms);
  pair->forward.adjoint = &pair->backward;
  pair->backward.adjoint = &pair->forward;
  return LinearMapPtr(pair, &pair->forward);
}

LinearMapPtr adjoint_of(const LinearMapPtr& map) { return LinearMapPtr(map, map->adjoint); }

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddConst: return "add_const";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kPow: return "pow";
    case OpKind::kBroadcastCols: return "broadcast_cols";
    case OpKind::kSumCols: return "sum_cols";
    case OpKind::kBroadcastRows: return "broadcast_rows";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kBroadcastAll: return "broadcast_all";
    case OpKind::kRowMap: return "row_map";
    case OpKind::kEntryMap: return "entry_map";
    case OpKind::kVStack: return "vstack";
  }
  return "?";
}

// ---- Var ---------------------------------------------------------------------

bool Var::valid() const {
  return tape_ != nullptr && generation_ == tape_->generation_ && id_ >= 0 &&
         static_cast<std::size_t>(id_) < tape_->nodes_.size();
}

Tape& Var::tape() const {
  if (!valid()) throw StateError("use of an unset or stale tape variable");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("item() on a node of shape " + shape(v));
  return v(0, 0);
}

// ---- Tape --------------------------------------------------------------------

Tape::Tape() : generation_(g_generation.fetch_add(1)) {}

void Tape::clear() {
  nodes_.clear();
  generation_ = g_generation.fetch_add(1);
}

void Tape::check(const Var& v) const {
  if (!v.valid()) throw StateError("use of an unset or stale tape variable");
  if (v.tape_ != this) throw ContractError("variable belongs to a different tape");
}

std::vector<int> Tape::parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).args; }

Var Tape::push(OpKind op, std::initializer_list<int> args, Matrix value, double scalar,
               LinearMapPtr map) {
  Node n;
  n.op = op;
  n.args.assign(args.begin(), args.end());
  n.scalar = scalar;
  n.map = std::move(map);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return var(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push_vstack(const std::vector<int>& args, Matrix value) {
  Node n;
  n.op = OpKind::kVStack;
  n.args = args;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return var(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Matrix value) { return push(OpKind::kLeaf, {}, std::move(value)); }

Var Tape::constant(Index rows, Index cols, double fill) {
  return leaf(Matrix::Constant(rows, cols, fill));
}

std::vector<Var> Tape::grad(const Var& y, std::span<const Var> wrt) {
  check(y);
  if (y.value().size() != 1) throw ContractError("grad() needs a 1x1 output, got " + shape(y.value()));
  return vjp(y, constant(1, 1, 1.0), wrt);
}

std::vector<Var> Tape::vjp(const Var& y, const Var& seed, std::span<const Var> wrt) {
  check(y);
  check(seed);
  if (seed.rows() != y.rows() || seed.cols() != y.cols()) {
    throw ConfigError("vjp seed shape " + shape(seed.value()) + " differs from output " +
                      shape(y.value()));
  }
  GraphOps ops{*this};
  return reverse_pass(ops, y.id(), seed, ids_of(*this, wrt));
}

std::vector<Matrix> Tape::grad_values(const Var& y, std::span<const Var> wrt) const {
  check(y);
  if (y.value().size() != 1) throw ContractError("grad() needs a 1x1 output, got " + shape(y.value()));
  ValueOps ops{*this};
  return reverse_pass(ops, y.id(), Matrix::Ones(1, 1), ids_of(*this, wrt));
}

std::vector<Var> Tape::jvp(std::span<const Var> outputs, std::span<const Var> inputs,
                           std::span<const Var> tangents) {
  if (inputs.size() != tangents.size()) throw ContractError("jvp needs one tangent per input");
  const std::vector<int> out_ids = ids_of(*this, outputs);
  const std::vector<int> in_ids = ids_of(*this, inputs);
  const std::vector<int> tan_ids = ids_of(*this, tangents);
  for (std::size_t k = 0; k < in_ids.size(); ++k) {
    const Matrix& a = value(in_ids[k]);
    const Matrix& b = value(tan_ids[k]);
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ConfigError("jvp tangent shape " + shape(b) + " differs from input " + shape(a));
    }
  }
  std::vector<Var> result;
  if (out_ids.empty()) return result;
  const int hi = *std::max_element(out_ids.begin(), out_ids.end());
  const int lo = in_ids.empty() ? hi + 1 : *std::min_element(in_ids.begin(), in_ids.end());

  std::vector<std::optional<Var>> tan;
  auto t_of = [&](int p) -> std::optional<Var> {
    if (p < lo || p > hi) return std::nullopt;
    return tan[static_cast<std::size_t>(p - lo)];
  };
  auto sum2 = [](std::optional<Var> x, std::optional<Var> y) -> std::optional<Var> {
    if (x && y) return *x + *y;
    return x ? x : y;
  };
  if (lo <= hi) {
    const auto n = static_cast<std::size_t>(hi - lo + 1);
    const std::vector<char> dep = forward_dependents(*this, lo, hi, in_ids);
    std::vector<char> needed(n, 0);
    for (int o : out_ids) {
      if (o >= lo) needed[static_cast<std::size_t>(o - lo)] = 1;
    }
    for (int i = hi; i >= lo; --i) {
      if (!needed[static_cast<std::size_t>(i - lo)]) continue;
      for (int p : parents(i)) {
        if (p >= lo) needed[static_cast<std::size_t>(p - lo)] = 1;
      }
    }
    tan.resize(n);
    for (std::size_t k = 0; k < in_ids.size(); ++k) {
      if (in_ids[k] > hi) continue;
      auto& slot = tan[static_cast<std::size_t>(in_ids[k] - lo)];
      slot = slot ? *slot + var(tan_ids[k]) : var(tan_ids[k]);
    }
    for (int i = lo; i <= hi; ++i) {
      const auto idx = static_cast<std::size_t>(i - lo);
      if (!dep[idx] || !needed[idx] || op(i) == OpKind::kLeaf) continue;
      const NodeInfo nd = snapshot(*this, i);
      const auto& a = nd.args;
      const std::optional<Var> ta = a.empty() ? std::nullopt : t_of(a[0]);
      const std::optional<Var> tb = a.size() > 1 ? t_of(a[1]) : std::nullopt;
      std::optional<Var> t;
      switch (nd.op) {
        case OpKind::kLeaf:
          break;
        case OpKind::kAdd:
          t = sum2(ta, tb);
          break;
        case OpKind::kSub:
          t = sum2(ta, tb ? std::optional<Var>(-*tb) : std::nullopt);
          break;
        case OpKind::kMul:
          t = sum2(ta ? std::optional<Var>(*ta * var(a[1])) : std::nullopt,
                   tb ? std::optional<Var>(var(a[0]) * *tb) : std::nullopt);
          break;
        case OpKind::kDiv: {
          const std::optional<Var> num =
              sum2(ta, tb ? std::optional<Var>(-(var(i) * *tb)) : std::nullopt);
          if (num) t = *num / var(a[1]);
          break;
        }
        case OpKind::kNeg:
          if (ta) t = -*ta;
          break;
        case OpKind::kScale:
          if (ta) t = nd.scalar * *ta;
          break;
        case OpKind::kAddConst:
          t = ta;
          break;
        case OpKind::kMatMul:
          t = sum2(ta ? std::optional<Var>(matmul(*ta, var(a[1]))) : std::nullopt,
                   tb ? std::optional<Var>(matmul(var(a[0]), *tb)) : std::nullopt);
          break;
        case OpKind::kTranspose:
          if (ta) t = transpose(*ta);
          break;
        case OpKind::kTanh:
          if (ta) {
            const Var y = var(i);
            t = *ta * (1.0 - y * y);
          }
          break;
        case OpKind::kExp:
          if (ta) t = *ta * var(i);
          break;
        case OpKind::kLog:
          if (ta) t = *ta / var(a[0]);
          break;
        case OpKind::kPow:
          if (ta) t = *ta * (nd.scalar * pow(var(a[0]), nd.scalar - 1.0));
          break;
        case OpKind::kBroadcastCols:
          if (ta) t = broadcast_cols(*ta, value(i).cols());
          break;
        case OpKind::kSumCols:
          if (ta) t = sum_cols(*ta);
          break;
        case OpKind::kBroadcastRows:
          if (ta) t = broadcast_rows(*ta, value(i).rows());
          break;
        case OpKind::kSumRows:
          if (ta) t = sum_rows(*ta);
          break;
        case OpKind::kSum:
          if (ta) t = sum(*ta);
          break;
        case OpKind::kBroadcastAll:
          if (ta) t = broadcast_all(*ta, value(i).rows(), value(i).cols());
          break;
        case OpKind::kRowMap:
          if (ta) t = row_map(*ta, nd.map);
          break;
        case OpKind::kEntryMap:
          if (ta) t = entry_map(*ta, nd.map);
          break;
        case OpKind::kVStack: {
          std::vector<Var> parts;
          bool any = false;
          for (int p : a) {
            const auto tp = t_of(p);
            if (tp) {
              any = true;
              parts.push_back(*tp);
            } else {
              parts.push_back(constant(value(p).rows(), value(p).cols(), 0.0));
            }
          }
          if (any) t = vstack(std::span<const Var>(parts));
          break;
        }
      }
      tan[idx] = t;
    }
  }
  result.reserve(out_ids.size());
  for (int o : out_ids) {
    const std::optional<Var> t = t_of(o);
    if (t) {
      result.push_back(*t);
    } else {
      result.push_back(constant(value(o).rows(), value(o).cols(), 0.0));
    }
  }
  return result;
}

// ---- operators -----------------------------------------------------------------

Var operator+(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, OpKind::kAdd);
  return t.push(OpKind::kAdd, {a.id(), b.id()}, a.value() + b.value());
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, OpKind::kSub);
  return t.push(OpKind::kSub, {a.id(), b.id()}, a.value() - b.value());
}

Var operator*(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, OpKind::kMul);
  return t.push(OpKind::kMul, {a.id(), b.id()}, a.value().cwiseProduct(b.value()));
}

Var operator/(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, OpKind::kDiv);
  return t.push(OpKind::kDiv, {a.id(), b.id()}, a.value().cwiseQuotient(b.value()));
}

Var operator-(const Var& a) { return a.tape().push(OpKind::kNeg, {a.id()}, -a.value()); }

Var operator+(const Var& a, double c) {
  return a.tape().push(OpKind::kAddConst, {a.id()}, (a.value().array() + c).matrix(), c);
}
Var operator+(double c, const Var& a) { return a + c; }
Var operator-(const Var& a, double c) { return a + (-c); }
Var operator-(double c, const Var& a) { return (-a) + c; }

Var operator*(double c, const Var& a) {
  return a.tape().push(OpKind::kScale, {a.id()}, c * a.value(), c);
}
Var operator*(const Var& a, double c) { return c * a; }
Var operator/(const Var& a, double c) { return (1.0 / c) * a; }
Var operator/(double c, const Var& a) { return c * pow(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows()) {
    shape_error(t.next_id(), OpKind::kMatMul,
                "inner dimensions " + shape(a.value()) + " * " + shape(b.value()));
  }
  return t.push(OpKind::kMatMul, {a.id(), b.id()}, a.value() * b.value());
}

Var transpose(const Var& a) {
  return a.tape().push(OpKind::kTranspose, {a.id()}, a.value().transpose());
}

Var tanh(const Var& a) {
  return a.tape().push(OpKind::kTanh, {a.id()}, a.value().array().tanh().matrix());
}

Var exp(const Var& a) {
  return a.tape().push(OpKind::kExp, {a.id()}, a.value().array().exp().matrix());
}

Var log(const Var& a) {
  return a.tape().push(OpKind::kLog, {a.id()}, a.value().array().log().matrix());
}

Var pow(const Var& a, double p) {
  return a.tape().push(OpKind::kPow, {a.id()}, a.value().array().pow(p).matrix(), p);
}

Var sqrt(const Var& a) { return pow(a, 0.5); }
Var square(const Var& a) { return a * a; }

Var sum(const Var& a) {
  return a.tape().push(OpKind::kSum, {a.id()}, Matrix::Constant(1, 1, a.value().sum()));
}

Var sum_cols(const Var& a) {
  return a.tape().push(OpKind::kSumCols, {a.id()}, a.value().rowwise().sum());
}

Var sum_rows(const Var& a) {
  return a.tape().push(OpKind::kSumRows, {a.id()}, a.value().colwise().sum());
}

Var broadcast_cols(const Var& a, Index cols) {
  Tape& t = a.tape();
  if (a.cols() != 1) shape_error(t.next_id(), OpKind::kBroadcastCols, "input " + shape(a.value()));
  return t.push(OpKind::kBroadcastCols, {a.id()}, a.value().replicate(1, cols));
}

Var broadcast_rows(const Var& a, Index rows) {
  Tape& t = a.tape();
  if (a.rows() != 1) shape_error(t.next_id(), OpKind::kBroadcastRows, "input " + shape(a.value()));
  return t.push(OpKind::kBroadcastRows, {a.id()}, a.value().replicate(rows, 1));
}

Var broadcast_all(const Var& a, Index rows, Index cols) {
  Tape& t = a.tape();
  if (a.value().size() != 1) shape_error(t.next_id(), OpKind::kBroadcastAll, "input " + shape(a.value()));
  return t.push(OpKind::kBroadcastAll, {a.id()}, Matrix::Constant(rows, cols, a.value()(0, 0)));
}

Var row_map(const Var& a, const LinearMapPtr& map) {
  Tape& t = a.tape();
  if (a.rows() != map->in_rows) {
    shape_error(t.next_id(), OpKind::kRowMap,
                "map expects " + std::to_string(map->in_rows) + " rows, got " + shape(a.value()));
  }
  return t.push(OpKind::kRowMap, {a.id()}, apply_row_map(*map, a.value()), 0.0, map);
}

Var entry_map(const Var& a, const LinearMapPtr& map) {
  Tape& t = a.tape();
  if (a.rows() != map->in_rows || a.cols() != map->in_cols) {
    shape_error(t.next_id(), OpKind::kEntryMap,
                "map expects " + std::to_string(map->in_rows) + "x" + std::to_string(map->in_cols) +
                    ", got " + shape(a.value()));
  }
  return t.push(OpKind::kEntryMap, {a.id()}, apply_entry_map(*map, a.value()), 0.0, map);
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("vstack of zero parts");
  Tape& t = parts[0].tape();
  const Index cols = parts[0].cols();
  Index total = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const auto& p : parts) {
    t.check(p);
    if (p.cols() != cols) {
      shape_error(t.next_id(), OpKind::kVStack,
                  "column counts " + std::to_string(cols) + " and " + std::to_string(p.cols()));
    }
    total += p.rows();
    ids.push_back(p.id());
  }
  Matrix v(total, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    v.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return t.push_vstack(ids, std::move(v));
}

Var vstack(std::initializer_list<Var> parts) {
  return vstack(std::span<const Var>(parts.begin(), parts.size()));
}

Var rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ContractError("row range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                        ") outside " + shape(a.value()));
  }
  return row_map(a, rows_map(a.rows(), start, count));
}

Var row(const Var& a, Index i) { return rows(a, i, 1); }

Var tile_rows(const Var& a, Index k) {
  const Index r = a.rows();
  std::vector<LinearMap::Term> terms;
  terms.reserve(static_cast<std::size_t>(r * k));
  for (Index b = 0; b < k; ++b) {
    for (Index i = 0; i < r; ++i) terms.push_back({b * r + i, i, 1.0});
  }
  return row_map(a, make_linear_map(r, 0, r * k, 0, std::move(terms)));
}

Var fold_blocks(const Var& a, Index k) {
  const Index n = a.rows();
  if (k <= 0 || n % k != 0) throw ContractError("fold_blocks: rows not divisible into blocks");
  const Index r = n / k;
  std::vector<LinearMap::Term> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (Index b = 0; b < k; ++b) {
    for (Index i = 0; i < r; ++i) terms.push_back({i, b * r + i, 1.0});
  }
  return row_map(a, make_linear_map(n, 0, r, 0, std::move(terms)));
}

Var repeat_each(const Var& a, Index k) {
  const Index r = a.rows();
  std::vector<LinearMap::Term> terms;
  terms.reserve(static_cast<std::size_t>(r * k));
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < k; ++j) terms.push_back({i * k + j, i, 1.0});
  }
  return row_map(a, make_linear_map(r, 0, r * k, 0, std::move(terms)));
}

Var group_sum(const Var& a, Index k) {
  const Index n = a.rows();
  if (k <= 0 || n % k != 0) throw ContractError("group_sum: rows not divisible into groups");
  std::vector<LinearMap::Term> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) terms.push_back({i / k, i, 1.0});
  return row_map(a, make_linear_map(n, 0, n / k, 0, std::move(terms)));
}

Var constant_like(const Var& a, double c) { return a.tape().constant(a.rows(), a.cols(), c); }

std::vector<Var> lanes(const Var& a) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) out.push_back(row(a, i));
  return out;
}

}  // namespace gfinn::ad
