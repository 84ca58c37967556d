#include "mfn/diff/nn.hpp"

#include <cmath>

namespace mfn::diff {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Dense::Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(name + ".w", uniform_matrix(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng)),
      bias(name + ".b", Matrix(1, out)),
      has_bias(with_bias) {}

Var Dense::apply(Tape& tape, Var x) {
  Var y = matmul(x, tape.parameter(weight));
  return has_bias ? add_row(y, tape.parameter(bias)) : y;
}

void Dense::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
         bool final_bias) {
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.emplace_back(name + ".l" + std::to_string(i), width, hidden[i], rng);
    width = hidden[i];
  }
  layers.emplace_back(name + ".l" + std::to_string(hidden.size()), width, out, rng, final_bias);
}

Var Mlp::apply(Tape& tape, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i].apply(tape, x);
    if (i + 1 < layers.size()) x = swish(x);
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

}  // namespace mfn::diff
