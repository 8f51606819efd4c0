#include "gfinn/generic.hpp"

#include <cmath>

#include "gfinn/baselines.hpp"
#include "gfinn/error.hpp"

namespace gfinn {

ModelSpec default_model_spec(const std::string& problem, const std::string& method,
                             const std::string& case_tag) {
  ModelSpec s;
  s.method = method;
  s.case_tag = case_tag;
  if (problem == "pendulum") s.k_l = 8;
  if (method == "gfinn" && case_tag == "2b") {
    if (problem == "gas" || problem == "langevin") s.s = {1, 30};
    if (problem == "langevin") s.m = {1, 30};
  }
  if (method == "gnode" && problem == "gas") s.s = {1, 30};
  if (method == "sdenet" || method == "analytic") s.case_tag.clear();
  return s;
}

std::vector<std::string> validate_model_spec(const Problem& problem, const ModelSpec& spec) {
  std::vector<std::string> errs;
  const std::string& m = spec.method;
  const std::string& c = spec.case_tag;
  if (m != "gfinn" && m != "gnode" && m != "spnn" && m != "sdenet" && m != "analytic") {
    errs.push_back("method must be one of gfinn, gnode, spnn, sdenet, analytic (got '" + m + "')");
    return errs;
  }
  if (m != "sdenet" && m != "analytic" && c != "1" && c != "2a" && c != "2b") {
    errs.push_back("case must be one of 1, 2a, 2b (got '" + c + "')");
  }
  if (m == "spnn" && c != "1") errs.push_back("spnn supports case 1 only");
  if (m == "gnode" && c == "1") errs.push_back("gnode supports case 2a and 2b only");
  if ((m == "spnn" || m == "gnode") && problem.stochastic()) {
    errs.push_back(m + " is defined for the deterministic problems only");
  }
  if (m == "sdenet" && !problem.stochastic()) errs.push_back("sdenet supports the langevin problem only");
  if (m == "gnode" && problem.dim() < 3) errs.push_back("gnode needs a state dimension of at least 3");
  if (m == "spnn" && !(spec.spnn_lambda > 0.0)) errs.push_back("spnn_lambda must be positive");
  if (m == "gfinn" && (c == "2a" || c == "2b")) {
    if (spec.k_l < problem.rank(OpKind::kL)) {
      errs.push_back("K_L = " + std::to_string(spec.k_l) + " is below rank(L) = " +
                     std::to_string(problem.rank(OpKind::kL)));
    }
    if (spec.k_m < problem.rank(OpKind::kM)) {
      errs.push_back("K_M = " + std::to_string(spec.k_m) + " is below rank(M) = " +
                     std::to_string(problem.rank(OpKind::kM)));
    }
  }
  if (m == "gnode" && spec.k_m < problem.rank(OpKind::kM)) {
    errs.push_back("K_M = " + std::to_string(spec.k_m) + " is below rank(M)");
  }
  for (const auto* ls : {&spec.e, &spec.s, &spec.l, &spec.m, &spec.mu, &spec.sigma}) {
    if (ls->layers < 1 || (ls->layers > 1 && ls->width < 1)) {
      errs.push_back("network layers must be >= 1 and widths >= 1");
      break;
    }
  }
  if (spec.sdenet_noise_dim < 0) errs.push_back("sdenet_noise_dim must be >= 0");
  return errs;
}

Var unit_lanes(ad::Tape& tape, Index d, Index B, Index k) {
  Matrix E = Matrix::Zero(d, B);
  E.row(k).setOnes();
  return tape.leaf(std::move(E));
}

// ---- components ---------------------------------------------------------------------

Var OperatorComponent::factor_apply(const Ctx&, const Var&, const Var&, const Var&) const {
  throw ConfigError("operator '" + kind() + "' has no square-root factor");
}

std::pair<Var, Var> AnalyticScalar::value_and_grad(const Ctx&, const Var& Z) const {
  if (energy_) return {problem_.energy(Z), problem_.grad_energy(Z)};
  return {problem_.entropy(Z), problem_.grad_entropy(Z)};
}

TransformedNet::TransformedNet(ParamStore& store, const std::string& prefix, const Transform& t,
                               const LayerSpec& ls)
    : transform_(t), net_(store, prefix, MlpSpec{t.out_dim(), 1, ls.layers, ls.width}) {}

std::pair<Var, Var> TransformedNet::value_and_grad(const Ctx& ctx, const Var& Z) const {
  const Var P = transform_.eval(Z);
  auto [v, gf] = net_.value_and_grad(ctx, P);
  return {v, transform_.jt_apply(Z, gf)};
}

PlainNet::PlainNet(ParamStore& store, const std::string& prefix, int d, const LayerSpec& ls)
    : net_(store, prefix, MlpSpec{d, 1, ls.layers, ls.width}) {}

std::pair<Var, Var> PlainNet::value_and_grad(const Ctx& ctx, const Var& Z) const {
  return net_.value_and_grad(ctx, Z);
}

Var AnalyticOperator::apply(const Ctx&, const Var& Z, const Var&, const Var& V) const {
  return kind_ == OpKind::kL ? problem_.apply_L(Z, V) : problem_.apply_M(Z, V);
}

int AnalyticOperator::factor_dim() const { return kind_ == OpKind::kM ? problem_.noise_dim() : 0; }

Var AnalyticOperator::factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const {
  if (factor_dim() == 0) return OperatorComponent::factor_apply(ctx, Z, G, Xi);
  return (1.0 / std::sqrt(2.0 * problem_.k_b())) * problem_.noise(Z, Xi);
}

BankOperator::BankOperator(ParamStore& store, const std::string& prefix, OpKind kind, int k, int d,
                           const LayerSpec& ls)
    : kind_(kind),
      bank_(store, prefix + ".bank", k, d),
      tri_(store, prefix + ".T", k, MlpSpec{d, 1, ls.layers, ls.width}) {}

void BankOperator::init(ParamStore& store, Rng& rng) const {
  bank_.init(store, rng);
  tri_.init(store, rng);
}

Var BankOperator::apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& V) const {
  const Index d = bank_.d();
  const Var P = bank_.project(ctx, G);
  const Var u = bank_apply(P, V, d);
  const Var t = tri_.entries(ctx, Z);
  const Var w = kind_ == OpKind::kL ? tri_.apply_t(t, u) - tri_.apply(t, u)
                                    : tri_.apply_t(t, tri_.apply(t, u));
  return bank_apply_t(P, w, bank_.k());
}

Var BankOperator::factor_apply(const Ctx& ctx, const Var& Z, const Var& G, const Var& Xi) const {
  if (kind_ != OpKind::kM) return OperatorComponent::factor_apply(ctx, Z, G, Xi);
  const Var P = bank_.project(ctx, G);
  const Var t = tri_.entries(ctx, Z);
  return bank_apply_t(P, tri_.apply_t(t, Xi), bank_.k());
}

// ---- GenericModel -------------------------------------------------------------------

GenericModel::GenericModel(std::shared_ptr<const Problem> problem, const ModelSpec& spec)
    : Model(std::move(problem)) {
  spec_ = spec;
  const Problem& p = *problem_;
  const auto errs = validate_model_spec(p, spec);
  if (!errs.empty()) throw ConfigError(errs.front());
  if (spec.method == "sdenet") throw ConfigError("sdenet is not a GENERIC-structured model");
  const int d = p.dim();
  const bool learned_scalars =
      spec.method != "analytic" && (spec.case_tag == "1" || spec.case_tag == "2b");
  if (spec.method == "gfinn" && spec.case_tag == "1") {
    e_ = std::make_unique<TransformedNet>(params_, "E", p.transform(OpKind::kM), spec.e);
    s_ = std::make_unique<TransformedNet>(params_, "S", p.transform(OpKind::kL), spec.s);
  } else if (learned_scalars) {
    e_ = std::make_unique<PlainNet>(params_, "E", d, spec.e);
    s_ = std::make_unique<PlainNet>(params_, "S", d, spec.s);
  } else {
    e_ = std::make_unique<AnalyticScalar>(p, true);
    s_ = std::make_unique<AnalyticScalar>(p, false);
  }
  if (spec.method == "gfinn" && spec.case_tag != "1") {
    l_ = std::make_unique<BankOperator>(params_, "L", OpKind::kL, spec.k_l, d, spec.l);
    m_ = std::make_unique<BankOperator>(params_, "M", OpKind::kM, spec.k_m, d, spec.m);
  } else if (spec.method == "gnode") {
    l_ = std::make_unique<GnodeL>(params_, "L.xi", d);
    m_ = std::make_unique<GnodeM>(params_, "M", spec.k_m, d);
  } else {
    l_ = std::make_unique<AnalyticOperator>(p, OpKind::kL);
    m_ = std::make_unique<AnalyticOperator>(p, OpKind::kM);
  }
}

void GenericModel::init(std::uint64_t seed) {
  Rng rng(seed);
  e_->init(params_, rng);
  s_->init(params_, rng);
  l_->init(params_, rng);
  m_->init(params_, rng);
}

GenericModel::Terms GenericModel::terms(const Ctx& ctx, const Var& Z) const {
  Terms t;
  t.grad_e = e_->grad(ctx, Z);
  t.grad_s = s_->grad(ctx, Z);
  t.rhs = l_->apply(ctx, Z, t.grad_s, t.grad_e) + m_->apply(ctx, Z, t.grad_e, t.grad_s);
  return t;
}

Var GenericModel::m_column(const Ctx& ctx, const Var& Z, const Var& grad_e, int k) const {
  return m_->apply(ctx, Z, grad_e, unit_lanes(ctx.tape, Z.rows(), Z.cols(), k));
}

Var GenericModel::divergence_m(const Ctx& ctx, const Var& Z, const Var& grad_e) const {
  Var div;
  for (int k = 0; k < Z.rows(); ++k) {
    const Var col = m_column(ctx, Z, grad_e, k);
    const Var e = unit_lanes(ctx.tape, Z.rows(), Z.cols(), k);
    const Var out[] = {col};
    const Var in[] = {Z};
    const Var tan[] = {e};
    const Var dcol = ctx.tape.jvp(out, in, tan)[0];
    div = div.valid() ? div + dcol : dcol;
  }
  return div;
}

Var GenericModel::drift(const Ctx& ctx, const Var& Z) const {
  const Terms t = terms(ctx, Z);
  if (!stochastic()) return t.rhs;
  return t.rhs + problem_->k_b() * divergence_m(ctx, Z, t.grad_e);
}

int GenericModel::noise_dim() const { return stochastic() ? m_->factor_dim() : 0; }

Var GenericModel::noise(const Ctx& ctx, const Var& Z, const Var& Xi) const {
  if (!stochastic()) throw ConfigError("noise requested for a deterministic problem");
  const Var ge = e_->grad(ctx, Z);
  return std::sqrt(2.0 * problem_->k_b()) * m_->factor_apply(ctx, Z, ge, Xi);
}

Var GenericModel::diffusion_column(const Ctx& ctx, const Var& Z, int k) const {
  const Var ge = e_->grad(ctx, Z);
  return (2.0 * problem_->k_b()) * m_column(ctx, Z, ge, k);
}

Var GenericModel::penalty(const Ctx& ctx, const Var& Z) const {
  if (spec_.method != "spnn") return {};
  return spec_.spnn_lambda * degeneracy_penalty(*this, ctx, Z);
}

std::unique_ptr<Model> build_model(std::shared_ptr<const Problem> problem, const ModelSpec& spec) {
  const auto errs = validate_model_spec(*problem, spec);
  if (!errs.empty()) {
    std::string all;
    for (const auto& e : errs) all += (all.empty() ? "" : "; ") + e;
    throw ConfigError(all);
  }
  if (spec.method == "sdenet") return std::make_unique<SdeNetModel>(std::move(problem), spec);
  return std::make_unique<GenericModel>(std::move(problem), spec);
}

std::vector<MethodCase> method_cases(const Problem& problem) {
  std::vector<MethodCase> out;
  for (const char* m : {"gfinn", "gnode", "spnn"}) {
    for (const char* c : {"1", "2a", "2b"}) {
      if (validate_model_spec(problem, default_model_spec(problem.name(), m, c)).empty()) out.push_back({m, c});
    }
  }
  if (validate_model_spec(problem, default_model_spec(problem.name(), "sdenet", "")).empty()) {
    out.push_back({"sdenet", ""});
  }
  return out;
}

Matrix eval_drift(const Model& model, const Matrix& Z) {
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  return model.drift(ctx, tape.leaf(Z)).value();
}

ModelSnapshot snapshot(const GenericModel& model, const Vector& z) {
  const Index d = z.size();
  ad::Tape tape;
  const Ctx ctx(tape, model.params());
  const Var Z = tape.leaf(z.replicate(1, d));
  const Var I = tape.leaf(Matrix::Identity(d, d));
  auto [ev, ge] = model.energy().value_and_grad(ctx, Z);
  auto [sv, gs] = model.entropy().value_and_grad(ctx, Z);
  ModelSnapshot out;
  out.e = ev.value()(0, 0);
  out.s = sv.value()(0, 0);
  out.grad_e = ge.value().col(0);
  out.grad_s = gs.value().col(0);
  out.l = model.op_l().apply(ctx, Z, gs, I).value();
  out.m = model.op_m().apply(ctx, Z, ge, I).value();
  return out;
}

}  // namespace gfinn
