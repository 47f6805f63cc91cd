#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "rbw/num/params.hpp"

namespace rbw::num {

/// Central-difference estimate (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
/// whose true gradient is ~0 from dividing rounding noise by zero.
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

struct GradCheckOptions {
  double h = 1e-5;
  /// Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates_checked = 0;
};

/// Builds a scalar loss on a fresh tape from bound parameters.
using LossBuilder = std::function<Var(Tape&, const Bindings&)>;

/// Compares Tape::backward against central differences for parameters.
GradCheckResult check_param_gradients(const LossBuilder& loss, const ParamSet& params,
                                      const GradCheckOptions& options = {});

}  // namespace rbw::num
