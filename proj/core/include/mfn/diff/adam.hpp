#pragma once

#include <span>

#include "mfn/diff/parameter.hpp"

namespace mfn::diff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update on every non-frozen parameter, then clears
// all gradients.
void adam_step(std::span<Parameter* const> params, const AdamConfig& config);

// Plain gradient descent, value -= lr * grad, then clears gradients.
void sgd_step(std::span<Parameter* const> params, double lr);

void zero_grads(std::span<Parameter* const> params);

}  // namespace mfn::diff
