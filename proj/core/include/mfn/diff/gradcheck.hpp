#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "mfn/diff/parameter.hpp"
#include "mfn/diff/tape.hpp"

namespace mfn::diff {

// Builds a scalar loss on the given tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

enum class Stencil {
  three_point,  // (f(x+e) - f(x-e)) / 2e, truncation O(e^2)
  five_point,   // (f(x-2e) - 8f(x-e) + 8f(x+e) - f(x+2e)) / 12e, truncation O(e^4)
};

struct GradCheckOptions {
  // Coordinates beyond this count are subsampled (never fewer than 32).
  std::size_t max_coordinates = 256;
  std::uint64_t seed = 0;
  Stencil stencil = Stencil::three_point;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the reverse-mode gradient of `param` against central differences.
// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
// The parameter value and gradient are restored on return; other parameters
// reachable from the loss receive one backward pass worth of gradient, so
// zero them afterwards if that matters. Throws DeterminismError if two
// baseline evaluations disagree and ContractError if epsilon is outside
// [1e-7, 1e-3].
GradCheckReport finite_diff_check(const LossBuilder& forward, Parameter& param, double epsilon,
                                  const GradCheckOptions& options = {});

}  // namespace mfn::diff
