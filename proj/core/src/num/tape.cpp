#include "rbw/num/tape.hpp"

#include <cassert>

namespace rbw::num {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant placed on tape");
  return push(Node{std::move(value), false, {}, {}});
}

Var Tape::parameter(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite parameter placed on tape");
  return push(Node{std::move(value), true, {}, {}});
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Rule rule, const char* op) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(rule), op);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Rule rule, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node node{std::move(value), false, {}, {}};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    assert(in.tape_ == this && in.id() < nodes_.size());
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.rule = std::move(rule);
  return push(std::move(node));
}

std::span<double> Tape::accumulate(Var v) {
  const auto id = v.id();
  if (!nodes_[id].requires_grad) return {};
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("loss belongs to a different tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) {
    throw DimensionError("backward requires a scalar loss, got " + to_string(lv.shape()));
  }
  grads_.assign(nodes_.size(), {});
  if (!nodes_[loss.id()].requires_grad) return;
  grads_[loss.id()].assign(1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.rule || grads_[i].empty()) continue;
    // Rules only touch their inputs' buffers, which have smaller ids.
    node.rule(*this, std::span<const double>(grads_[i]));
  }
}

Tensor Tape::grad(Var v) const {
  const auto& value = nodes_[v.id()].value;
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) {
    return Tensor(value.shape(), grads_[v.id()]);
  }
  return Tensor(value.shape(), 0.0);
}

}  // namespace rbw::num
