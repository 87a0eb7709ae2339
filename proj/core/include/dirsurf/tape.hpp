#pragma once

// Scalar reverse-mode automatic differentiation.
//
// A Tape records every operation on `Var` values as a node holding at most two
// parent ids and the local partial derivatives. `backward` walks the nodes once
// in reverse order. Constants are `Var`s with no tape and cost nothing.
//
// Large vectorized sub-computations (the field MLPs) enter the tape as external
// blocks: one call node followed by one output node per result, with a
// user-supplied vector-Jacobian product invoked during the reverse sweep.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

namespace dirsurf::ad {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sqrt,
  Sin,
  Cos,
  Tanh,
  Sigmoid,
  Softplus,
  Abs,
  Relu,
  Max0,
  ExtCall,
  ExtOut,
};

class Tape;

/// Differentiable scalar: a value plus a handle into the tape that produced it.
class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT(google-explicit-constructor)

  double value() const noexcept { return value_; }
  NodeId id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool is_constant() const noexcept { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(double value, NodeId id, Tape* tape) : value_(value), id_(id), tape_(tape) {}

  double value_ = 0.0;
  NodeId id_ = kNoNode;
  Tape* tape_ = nullptr;
};

/// Reverse-mode rule for a vectorized block recorded with `Tape::record_external`.
/// `input_adjoints` arrives zeroed; implementations add dL/d(input) into it and
/// may accumulate parameter gradients into storage they own.
class ExternalFunction {
 public:
  virtual ~ExternalFunction() = default;
  virtual void backward(std::span<const double> output_adjoints, std::span<double> input_adjoints) = 0;
};

using GradientMap = std::map<NodeId, double>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf: appears in the gradient map returned by `backward`.
  Var parameter(double value);
  /// Untracked leaf (an input whose adjoint can still be read via `adjoint`).
  Var variable(double value);

  Var record_binary(OpKind op, const Var& a, const Var& b);
  Var record_unary(OpKind op, const Var& a);

  /// Records a vector block. Inputs may be constants; returns one Var per output value.
  std::vector<Var> record_external(std::span<const Var> inputs, std::span<const double> outputs,
                                   std::shared_ptr<ExternalFunction> fn);

  /// Seeds d(output)/d(output) = 1 and sweeps once in reverse order.
  GradientMap backward(const Var& output);

  /// Adjoint of any node after the last `backward` (0 for constants).
  double adjoint(const Var& v) const;

  const std::vector<NodeId>& parameters() const noexcept { return params_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).kind; }
  NodeId parent(NodeId id, int which) const;

  /// Drops all nodes, keeping allocated capacity.
  void clear();

 private:
  struct Node {
    OpKind kind;
    NodeId a;
    NodeId b;
    double da;
    double db;
  };
  struct External {
    std::vector<NodeId> inputs;
    NodeId first_output;
    std::int32_t num_outputs;
    std::shared_ptr<ExternalFunction> fn;
  };

  Var push(OpKind kind, double value, NodeId a, double da, NodeId b, double db);
  void check_same_tape(const Var& v) const;

  std::vector<Node> nodes_;
  std::vector<External> externals_;
  std::vector<NodeId> params_;
  std::vector<double> adjoints_;
};

/// Same value on the same tape, as an untracked leaf: no derivative flows back through it.
inline Var detach(const Var& a) { return a.tape() ? a.tape()->variable(a.value()) : a; }

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// log(1 + e^a)
Var softplus(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);
Var max0(const Var& a);

}  // namespace dirsurf::ad
