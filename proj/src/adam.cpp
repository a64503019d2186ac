#include "svat/adam.hpp"

#include <cmath>
#include <string>

#include "svat/errors.hpp"

namespace svat {

AdamState AdamState::for_store(const ParameterStore& params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& [name, value] : params) {
    state.first_moment.emplace_back(value.rows(), value.cols(), 0.0);
    state.second_moment.emplace_back(value.rows(), value.cols(), 0.0);
  }
  return state;
}

void adam_step(ParameterStore& params, const ParamGrads& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw UsageError("adam_step: learning rate must be positive");
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    diff::require_same_shape(params.at(i), grads[i], "adam_step gradient");
    diff::require_same_shape(params.at(i), state.first_moment[i], "adam_step moment");
  }

  const auto& cfg = state.config;
  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.at(i).data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.numeric_floor);
    }
  }
}

}  // namespace svat
