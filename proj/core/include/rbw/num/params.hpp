#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "rbw/num/tape.hpp"

namespace rbw::num {

/// Named parameter tensors, kept in name order so iteration is deterministic.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t count() const;  // total scalar entries
  std::size_t size() const { return tensors_.size(); }

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.tensors_ == b.tensors_; }

 private:
  std::map<std::string, Tensor> tensors_;
};

using GradSet = std::map<std::string, Tensor>;

/// Parameters placed on one tape. Trainable bindings are tape leaves that
/// require gradients; frozen bindings are constants.
class Bindings {
 public:
  Bindings(Tape& tape, const ParamSet& params, bool trainable);

  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

  /// Gradients of the last backward sweep, keyed like the ParamSet.
  GradSet gradients() const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

}  // namespace rbw::num
