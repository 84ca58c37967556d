#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mfn/diff/ops.hpp"
#include "mfn/diff/parameter.hpp"

namespace mfn::diff {

using Rng = std::mt19937_64;

// Uniform in [-limit, limit].
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng);
Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

// Affine layer x * W + b with W of shape in x out.
struct Dense {
  Parameter weight;
  Parameter bias;
  bool has_bias = true;

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in() const noexcept { return weight.rows(); }
  std::size_t out() const noexcept { return weight.cols(); }

  Var apply(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out);
};

// Stack of Dense layers with swish between them (none after the last).
struct Mlp {
  std::vector<Dense> layers;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
      Rng& rng, bool final_bias = true);

  Var apply(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out);
  Dense& final_layer() { return layers.back(); }
};

}  // namespace mfn::diff
