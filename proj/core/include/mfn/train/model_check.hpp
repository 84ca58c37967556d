#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mfn/diff/gradcheck.hpp"

namespace mfn::train {

// Tiny two-channel MFN used to verify reverse-mode gradients end to end.
struct ModelCheckConfig {
  std::size_t dim = 8;
  std::size_t hidden = 8;
  std::size_t heads = 2;
  std::size_t num_interests = 2;
  std::size_t seq_len = 5;
  std::size_t batch = 3;
  double aux_weight = 0.1;
  // Gradients through the combination path are tiny at init (down to 1e-11),
  // so a small step loses them to roundoff. Checked with the five-point stencil.
  double epsilon = 1e-3;
  std::size_t max_coordinates = 64;
};

struct ParamCheck {
  std::string name;
  diff::GradCheckReport report;
};

struct ModelCheckResult {
  std::vector<ParamCheck> params;  // every trainable parameter, centers included
  double max_relative_error = 0.0;
  std::string worst_param;
  // With frozen centers: C is not among the trainable parameters and its
  // gradient buffer stays exactly zero after a backward pass.
  bool frozen_centers_untouched = false;
};

ModelCheckResult check_model_gradients(const ModelCheckConfig& config, std::uint64_t seed);

}  // namespace mfn::train
