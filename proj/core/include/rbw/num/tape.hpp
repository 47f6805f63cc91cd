#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "rbw/num/tensor.hpp"

namespace rbw::num {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode recording of tensor operations.
///
/// Nodes are appended in evaluation order, so every record's inputs carry
/// smaller ids than the record itself and a single reverse sweep visits the
/// graph in reverse-topological order. A node requires a gradient iff it is a
/// trainable leaf or any of its inputs requires one; only those nodes keep a
/// local gradient rule.
class Tape {
 public:
  /// Local gradient rule: receives the gradient flowing into the node's output
  /// and accumulates into its inputs via Tape::accumulate.
  using Rule = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Append an operation result. Throws NumericError if `value` is not finite.
  Var record(Tensor value, std::initializer_list<Var> inputs, Rule rule, const char* op);
  Var record(Tensor value, std::span<const Var> inputs, Rule rule, const char* op);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Accumulation target for a node's gradient; empty span when the node does
  /// not require a gradient.
  std::span<double> accumulate(Var v);

  /// Reverse sweep from a scalar node. Clears gradients from earlier sweeps.
  void backward(Var loss);

  /// Gradient of the last backward sweep; zeros for nodes that were not reached.
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    Rule rule;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace rbw::num
