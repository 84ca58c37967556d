#include "mfn/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "mfn/diff/nn.hpp"
#include "mfn/errors.hpp"

namespace mfn::diff {
namespace {

double evaluate(const LossBuilder& forward) {
  Tape tape;
  Var loss = forward(tape);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("finite_diff_check: forward must return a 1x1 loss, got " + loss.value().shape_string());
  }
  return loss.value()(0, 0);
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& forward, Parameter& param, double epsilon,
                                  const GradCheckOptions& options) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw ContractError("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  }
  const Matrix saved_grad = param.grad;

  const double base_a = evaluate(forward);
  const double base_b = evaluate(forward);
  if (std::memcmp(&base_a, &base_b, sizeof(double)) != 0) {
    throw DeterminismError("finite_diff_check: two baseline evaluations differ (" + std::to_string(base_a) +
                           " vs " + std::to_string(base_b) + ")");
  }

  param.zero_grad();
  {
    Tape tape;
    tape.backward(forward(tape));
  }
  const Matrix analytic = param.grad;
  param.grad = saved_grad;

  const std::size_t n = param.value.size();
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  const std::size_t budget = std::max<std::size_t>(options.max_coordinates, 32);
  if (n > budget) {
    Rng rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(budget);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  auto values = param.value.data();
  for (std::size_t idx : coords) {
    const double original = values[idx];
    auto at = [&](double step) {
      values[idx] = original + step;
      const double f = evaluate(forward);
      values[idx] = original;
      return f;
    };
    double numeric = 0.0;
    if (options.stencil == Stencil::five_point) {
      numeric = (at(-2.0 * epsilon) - 8.0 * at(-epsilon) + 8.0 * at(epsilon) - at(2.0 * epsilon)) / (12.0 * epsilon);
    } else {
      numeric = (at(epsilon) - at(-epsilon)) / (2.0 * epsilon);
    }
    const double a = analytic.data()[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coordinates_checked;
    if (report.coordinates_checked == 1 || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = idx;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace mfn::diff
