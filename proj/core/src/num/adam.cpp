#include "rbw/num/adam.hpp"

#include <cmath>

namespace rbw::num {

AdamState AdamState::init(const ParamSet& params, AdamConfig config) {
  if (!(config.lr >= 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
    throw ParameterError("invalid Adam hyperparameters");
  }
  AdamState s;
  s.config = config;
  for (const auto& [name, t] : params) {
    s.first_moment.emplace(name, Tensor(t.shape(), 0.0));
    s.second_moment.emplace(name, Tensor(t.shape(), 0.0));
  }
  return s;
}

void adam_step(ParamSet& params, const GradSet& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw std::out_of_range("gradient for unknown parameter '" + name + "'");
    if (g.shape() != params.get(name).shape()) {
      throw DimensionError("adam_step: gradient " + to_string(g.shape()) + " vs parameter " +
                           to_string(params.get(name).shape()) + " for '" + name + "'");
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for '" + name + "'");
  }
  state.step_count += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params) {
    auto mit = state.first_moment.find(name);
    auto vit = state.second_moment.find(name);
    if (mit == state.first_moment.end() || vit == state.second_moment.end()) {
      throw std::out_of_range("adam_step: no optimizer state for '" + name + "'");
    }
    auto git = grads.find(name);
    auto m = mit->second.values();
    auto v = vit->second.values();
    auto w = p.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = git == grads.end() ? 0.0 : git->second[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace rbw::num
