#include "mfn/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mfn/errors.hpp"

namespace mfn::train {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                         " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score order; a positive beats every negative
  // seen in earlier groups and ties with the negatives of its own group.
  double credit = 0.0;
  std::size_t negatives_below = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int y = labels[order[j]];
      if (y == 1) {
        ++group_pos;
      } else if (y == 0) {
        ++group_neg;
      } else {
        throw ContractError("auc: labels must be 0 or 1");
      }
      ++j;
    }
    credit += static_cast<double>(group_pos) * static_cast<double>(negatives_below) +
              0.5 * static_cast<double>(group_pos) * static_cast<double>(group_neg);
    negatives_below += group_neg;
    positives += group_pos;
    negatives += group_neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("auc: needs at least one positive and one negative example");
  }
  return credit / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double rela_impr(double auc_test, double auc_base) {
  if (auc_base == 0.5) throw ContractError("rela_impr: base AUC of 0.5 leaves no lift to normalize by");
  return ((auc_test - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

double logloss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty()) throw DimensionError("logloss: size mismatch or empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    total += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return -total / static_cast<double>(probs.size());
}

Comparison compare_auc(double test_auc, double base_auc) {
  return Comparison{base_auc, test_auc, rela_impr(test_auc, base_auc)};
}

}  // namespace mfn::train
