#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfn/diff/tape.hpp"

// Differentiable primitives. All operands must live on the same tape; shape
// mismatches throw DimensionError naming both shapes.
namespace mfn::diff {

Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);  // a * b^T
Var matmul_at(Var a, Var b);  // a^T * b
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
// Adds the 1 x c row to every row of the r x c matrix.
Var add_row(Var a, Var row);
// Repeats a 1 x c row n times.
Var repeat_row(Var row, std::size_t n);

Var softmax_rows(Var x);
Var swish(Var x);
Var sigmoid(Var x);
// ln(max(x, floor)); the gradient is zero where the clamp is active.
Var log_clamped(Var x, double floor);

Var sum(Var a);        // 1 x 1
Var mean_rows(Var a);  // 1 x c, the mean of each column over the rows

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);

// Mean binary cross entropy of an n x 1 probability column against labels,
// probabilities clamped to [clamp, 1 - clamp].
Var binary_cross_entropy(Var probs, std::span<const double> labels, double clamp = 1e-12);

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

}  // namespace mfn::diff
