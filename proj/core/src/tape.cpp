#include "dirsurf/tape.hpp"

#include <cmath>
#include <string>

#include "dirsurf/errors.hpp"

namespace dirsurf::ad {
namespace {

struct Local {
  double value;
  double da;
  double db;
};

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Abs: return "abs";
    case OpKind::Relu: return "relu";
    case OpKind::Max0: return "max0";
    default: return "op";
  }
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Local eval_binary(OpKind op, double a, double b) {
  switch (op) {
    case OpKind::Add: return {a + b, 1.0, 1.0};
    case OpKind::Sub: return {a - b, 1.0, -1.0};
    case OpKind::Mul: return {a * b, b, a};
    case OpKind::Div:
      if (b == 0.0) throw DomainError("div: division by zero");
      return {a / b, 1.0 / b, -a / (b * b)};
    default: throw UsageError(std::string("record_binary: not a binary op: ") + op_name(op));
  }
}

Local eval_unary(OpKind op, double a) {
  switch (op) {
    case OpKind::Neg: return {-a, -1.0, 0.0};
    case OpKind::Exp: {
      const double e = std::exp(a);
      return {e, e, 0.0};
    }
    case OpKind::Log:
      if (!(a > 0.0)) throw DomainError("log: argument must be positive, got " + std::to_string(a));
      return {std::log(a), 1.0 / a, 0.0};
    case OpKind::Sqrt: {
      if (!(a > 0.0)) throw DomainError("sqrt: argument must be positive, got " + std::to_string(a));
      const double r = std::sqrt(a);
      return {r, 0.5 / r, 0.0};
    }
    case OpKind::Sin: return {std::sin(a), std::cos(a), 0.0};
    case OpKind::Cos: return {std::cos(a), -std::sin(a), 0.0};
    case OpKind::Tanh: {
      const double t = std::tanh(a);
      return {t, 1.0 - t * t, 0.0};
    }
    case OpKind::Sigmoid: {
      const double s = logistic(a);
      return {s, s * (1.0 - s), 0.0};
    }
    case OpKind::Softplus: {
      // log1p(e^a) written to stay finite for large |a|.
      const double v = a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
      return {v, logistic(a), 0.0};
    }
    case OpKind::Abs: return {std::fabs(a), a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0), 0.0};
    case OpKind::Relu:
    case OpKind::Max0: return {a > 0.0 ? a : 0.0, a > 0.0 ? 1.0 : 0.0, 0.0};
    default: throw UsageError(std::string("record_unary: not a unary op: ") + op_name(op));
  }
}

void check_finite(double v, OpKind op) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite result from ") + op_name(op));
}

}  // namespace

Var Tape::push(OpKind kind, double value, NodeId a, double da, NodeId b, double db) {
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{kind, a, b, da, db});
  return Var(value, id, this);
}

void Tape::check_same_tape(const Var& v) const {
  if (!v.is_constant() && v.tape() != this) throw UsageError("operand lives on a different tape");
}

Var Tape::parameter(double value) {
  check_finite(value, OpKind::Leaf);
  Var v = push(OpKind::Leaf, value, kNoNode, 0.0, kNoNode, 0.0);
  params_.push_back(v.id());
  return v;
}

Var Tape::variable(double value) {
  check_finite(value, OpKind::Leaf);
  return push(OpKind::Leaf, value, kNoNode, 0.0, kNoNode, 0.0);
}

Var Tape::record_binary(OpKind op, const Var& a, const Var& b) {
  check_same_tape(a);
  check_same_tape(b);
  const Local l = eval_binary(op, a.value(), b.value());
  check_finite(l.value, op);
  if (a.is_constant() && b.is_constant()) return Var(l.value);
  return push(op, l.value, a.id(), l.da, b.id(), l.db);
}

Var Tape::record_unary(OpKind op, const Var& a) {
  check_same_tape(a);
  const Local l = eval_unary(op, a.value());
  check_finite(l.value, op);
  if (a.is_constant()) return Var(l.value);
  return push(op, l.value, a.id(), l.da, kNoNode, 0.0);
}

std::vector<Var> Tape::record_external(std::span<const Var> inputs, std::span<const double> outputs,
                                       std::shared_ptr<ExternalFunction> fn) {
  External ext;
  ext.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_same_tape(in);
    ext.inputs.push_back(in.id());
  }
  const auto index = static_cast<NodeId>(externals_.size());
  nodes_.push_back(Node{OpKind::ExtCall, index, kNoNode, 0.0, 0.0});
  ext.first_output = static_cast<NodeId>(nodes_.size());
  ext.num_outputs = static_cast<std::int32_t>(outputs.size());
  ext.fn = std::move(fn);
  externals_.push_back(std::move(ext));

  std::vector<Var> out;
  out.reserve(outputs.size());
  for (double v : outputs) {
    check_finite(v, OpKind::ExtOut);
    out.push_back(push(OpKind::ExtOut, v, index, 0.0, kNoNode, 0.0));
  }
  return out;
}

GradientMap Tape::backward(const Var& output) {
  if (output.tape() != this || output.id() < 0 || static_cast<std::size_t>(output.id()) >= nodes_.size())
    throw UsageError("backward: output is not on this tape");

  adjoints_.assign(nodes_.size(), 0.0);
  adjoints_[static_cast<std::size_t>(output.id())] = 1.0;
  std::vector<double> out_adj;
  std::vector<double> in_adj;

  for (auto i = static_cast<std::size_t>(output.id()) + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    const double g = adjoints_[i];
    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::ExtOut: break;
      case OpKind::ExtCall: {
        External& ext = externals_[static_cast<std::size_t>(n.a)];
        const auto first = static_cast<std::size_t>(ext.first_output);
        const auto count = static_cast<std::size_t>(ext.num_outputs);
        const std::size_t avail = adjoints_.size() > first ? std::min(count, adjoints_.size() - first) : 0;
        out_adj.assign(count, 0.0);
        bool any = false;
        for (std::size_t k = 0; k < avail; ++k) {
          out_adj[k] = adjoints_[first + k];
          any = any || out_adj[k] != 0.0;
        }
        if (!any) break;
        in_adj.assign(ext.inputs.size(), 0.0);
        ext.fn->backward(out_adj, in_adj);
        for (std::size_t k = 0; k < ext.inputs.size(); ++k) {
          if (ext.inputs[k] != kNoNode) adjoints_[static_cast<std::size_t>(ext.inputs[k])] += in_adj[k];
        }
        break;
      }
      default:
        if (g == 0.0) break;
        if (n.a != kNoNode) adjoints_[static_cast<std::size_t>(n.a)] += n.da * g;
        if (n.b != kNoNode) adjoints_[static_cast<std::size_t>(n.b)] += n.db * g;
        break;
    }
  }

  GradientMap grads;
  for (NodeId p : params_) grads[p] = adjoints_[static_cast<std::size_t>(p)];
  return grads;
}

double Tape::adjoint(const Var& v) const {
  if (v.is_constant()) return 0.0;
  check_same_tape(v);
  const auto i = static_cast<std::size_t>(v.id());
  return i < adjoints_.size() ? adjoints_[i] : 0.0;
}

NodeId Tape::parent(NodeId id, int which) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.kind == OpKind::ExtCall || n.kind == OpKind::ExtOut) return kNoNode;
  return which == 0 ? n.a : n.b;
}

void Tape::clear() {
  nodes_.clear();
  externals_.clear();
  params_.clear();
  adjoints_.clear();
}

namespace {
Tape* tape_of(const Var& a, const Var& b) {
  if (a.tape() && b.tape() && a.tape() != b.tape()) throw UsageError("operands live on different tapes");
  return a.tape() ? a.tape() : b.tape();
}

Var binary(OpKind op, const Var& a, const Var& b) {
  if (Tape* t = tape_of(a, b)) return t->record_binary(op, a, b);
  const Local l = eval_binary(op, a.value(), b.value());
  check_finite(l.value, op);
  return Var(l.value);
}

Var unary(OpKind op, const Var& a) {
  if (Tape* t = a.tape()) return t->record_unary(op, a);
  const Local l = eval_unary(op, a.value());
  check_finite(l.value, op);
  return Var(l.value);
}
}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(OpKind::Add, a, b); }
Var operator-(const Var& a, const Var& b) { return binary(OpKind::Sub, a, b); }
Var operator*(const Var& a, const Var& b) { return binary(OpKind::Mul, a, b); }
Var operator/(const Var& a, const Var& b) { return binary(OpKind::Div, a, b); }
Var operator-(const Var& a) { return unary(OpKind::Neg, a); }

Var exp(const Var& a) { return unary(OpKind::Exp, a); }
Var log(const Var& a) { return unary(OpKind::Log, a); }
Var sqrt(const Var& a) { return unary(OpKind::Sqrt, a); }
Var sin(const Var& a) { return unary(OpKind::Sin, a); }
Var cos(const Var& a) { return unary(OpKind::Cos, a); }
Var tanh(const Var& a) { return unary(OpKind::Tanh, a); }
Var sigmoid(const Var& a) { return unary(OpKind::Sigmoid, a); }
Var softplus(const Var& a) { return unary(OpKind::Softplus, a); }
Var abs(const Var& a) { return unary(OpKind::Abs, a); }
Var relu(const Var& a) { return unary(OpKind::Relu, a); }
Var max0(const Var& a) { return unary(OpKind::Max0, a); }

}  // namespace dirsurf::ad
