#pragma once

#include <cstddef>
#include <span>

namespace mfn::train {

struct Metrics {
  double auc = 0.5;
  double logloss = 0.0;
  std::size_t n_examples = 0;
};

// Mann-Whitney AUC: (concordant pairs + 0.5 * tied pairs) / (#pos * #neg),
// via one sort and tie groups. Labels must be 0 or 1; throws
// UndefinedMetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Relative AUC improvement over a base model in percent:
// ((auc_test - 0.5) / (auc_base - 0.5) - 1) * 100. Throws ContractError when
// auc_base is 0.5.
double rela_impr(double auc_test, double auc_base);

// Mean binary cross entropy with probabilities clamped to [1e-12, 1 - 1e-12].
double logloss(std::span<const double> probs, std::span<const int> labels);

struct Comparison {
  double base_auc = 0.5;
  double test_auc = 0.5;
  double rela_impr_percent = 0.0;
};

Comparison compare_auc(double test_auc, double base_auc);

}  // namespace mfn::train
