#include "rbw/num/params.hpp"

#include <stdexcept>

namespace rbw::num {

void ParamSet::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

Bindings::Bindings(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape) {
  for (const auto& [name, t] : params) {
    vars_.emplace(name, trainable ? tape.parameter(t) : tape.constant(t));
  }
}

Var Bindings::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("parameter '" + name + "' not bound");
  return it->second;
}

GradSet Bindings::gradients() const {
  GradSet out;
  for (const auto& [name, v] : vars_) out.emplace(name, tape_->grad(v));
  return out;
}

}  // namespace rbw::num
