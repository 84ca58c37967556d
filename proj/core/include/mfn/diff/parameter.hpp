#pragma once

#include <cstddef>
#include <string>

#include "mfn/diff/matrix.hpp"

namespace mfn::diff {

// A trainable matrix with its gradient and Adam moment accumulators.
// Frozen parameters take part in forward passes as constants: backward never
// writes their gradient and the optimizer never touches them.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix init);

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  std::size_t step_count = 0;
  bool frozen = false;

  std::size_t rows() const noexcept { return value.rows(); }
  std::size_t cols() const noexcept { return value.cols(); }

  void zero_grad();
  // Forget optimizer state (moments and step count).
  void reset_optimizer();
};

}  // namespace mfn::diff
