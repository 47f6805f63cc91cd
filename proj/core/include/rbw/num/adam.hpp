#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rbw/num/params.hpp"

namespace rbw::num {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step_count = 0;

  /// Zero moments shaped like `params`.
  static AdamState init(const ParamSet& params, AdamConfig config);
};

/// One bias-corrected Adam update. Parameters without an entry in `grads`
/// are treated as having a zero gradient.
void adam_step(ParamSet& params, const GradSet& grads, AdamState& state);

}  // namespace rbw::num
