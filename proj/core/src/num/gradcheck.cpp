#include "rbw/num/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rbw/num/rng.hpp"

namespace rbw::num {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: step must be positive");
  Tensor probe = x;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("relative_error: " + to_string(analytic.shape()) + " vs " +
                         to_string(numeric.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

GradCheckResult check_param_gradients(const LossBuilder& loss, const ParamSet& params,
                                      const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ParameterError("check_param_gradients: step must be positive");
  GradSet analytic;
  {
    Tape tape;
    Bindings bound(tape, params, true);
    Var l = loss(tape, bound);
    tape.backward(l);
    analytic = bound.gradients();
  }
  auto evaluate = [&](const ParamSet& p) {
    Tape tape;
    Bindings bound(tape, p, false);
    return loss(tape, bound).value()[0];
  };

  GradCheckResult result;
  Rng rng(options.seed);
  ParamSet probe = params;
  for (const auto& [name, tensor] : params) {
    std::vector<std::size_t> coords(tensor.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.coords_per_tensor != 0 && coords.size() > options.coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(options.coords_per_tensor);
    }
    Tensor& target = probe.get(name);
    const Tensor& g = analytic.at(name);
    for (auto i : coords) {
      const double orig = target[i];
      target[i] = orig + options.h;
      const double fp = evaluate(probe);
      target[i] = orig - options.h;
      const double fm = evaluate(probe);
      target[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("check_param_gradients: non-finite loss probing '" + name + "'");
      }
      const double numeric = (fp - fm) / (2.0 * options.h);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), options.floor});
      const double err = std::abs(g[i] - numeric) / denom;
      if (err >= result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace rbw::num
