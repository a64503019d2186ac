#pragma once

#include <cstdint>
#include <vector>

#include "svat/parameters.hpp"

namespace svat {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double numeric_floor = 1e-8;
};

// Moment estimates for every parameter of one store, same order and shapes.
struct AdamState {
  AdamConfig config;
  std::vector<diff::Tensor> first_moment;
  std::vector<diff::Tensor> second_moment;
  std::uint64_t step_count = 0;

  static AdamState for_store(const ParameterStore& params, AdamConfig config = {});
};

// One bias-corrected Adam update of every parameter:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + floor)
// Throws DimensionError when grads or moments disagree with the store and
// UsageError for lr <= 0.
void adam_step(ParameterStore& params, const ParamGrads& grads, AdamState& state, double lr);

}  // namespace svat
