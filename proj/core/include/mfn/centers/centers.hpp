#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mfn/diff/matrix.hpp"
#include "mfn/diff/parameter.hpp"
#include "mfn/diff/tape.hpp"

namespace mfn::centers {

// Global K x d interest-center matrix shared by all users.
struct InterestCenters {
  diff::Parameter C;

  InterestCenters() = default;
  explicit InterestCenters(diff::Matrix init, std::string name = "centers");

  std::size_t K() const noexcept { return C.rows(); }
  std::size_t dim() const noexcept { return C.cols(); }
};

struct EntropyLossParts {
  double l_se = 0.0;  // mean per-behavior assignment entropy
  double l_me = 0.0;  // entropy of the average assignment
  double l_e = 0.0;   // l_se - l_me, the quantity minimized
};

struct EntropyLossVars {
  diff::Var l_se;
  diff::Var l_me;
  diff::Var l_e;
};

inline constexpr double kLogFloor = 1e-12;

// P = softmax_rows(E C^T): row t is the probability that behavior t belongs
// to each center.
diff::Matrix assignment_probs(const diff::Matrix& seq_fixed, const InterestCenters& centers);
diff::Var assignment_probs(diff::Tape& tape, diff::Var seq_fixed, InterestCenters& centers);

// With m_j = (1/N) sum_t P_tj:
//   l_me = -(1/K) sum_j m_j ln m_j
//   l_se = -(1/(K N)) sum_j sum_t P_tj ln P_tj
// Natural log, arguments clamped at 1e-12. Throws ContractError when a row of
// P sums to something other than 1 (tolerance 1e-6).
EntropyLossParts entropy_losses(const diff::Matrix& P);
EntropyLossVars entropy_losses(diff::Var P);

// sampled: K behaviors drawn uniformly without replacement.
// spread: greedy D^2 sampling. The first behavior is uniform; each further
//   step draws 2 + ln K candidates with probability proportional to squared
//   distance from the nearest chosen center and keeps the one that lowers the
//   summed squared distance most.
// random_normal: N(0, rms^2) entries, rms taken over the corpus.
enum class CenterInit { sampled, spread, random_normal };
enum class CenterOptimizer { adam, sgd };

struct CenterPretrainConfig {
  std::size_t K = 4;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_iters = 1000;
  std::size_t eval_batch_size = 256;
  std::uint64_t seed = 0;
  CenterInit init = CenterInit::spread;
  CenterOptimizer optimizer = CenterOptimizer::adam;
};

struct CenterPretrainResult {
  InterestCenters centers;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  std::vector<double> batch_losses;
  std::size_t batch_size_used = 0;
  std::vector<std::string> warnings;
};

// K rows drawn without replacement from all behaviors in the corpus.
InterestCenters sampled_centers(std::span<const diff::Matrix> corpus, std::size_t K, std::uint64_t seed);
// Greedy D^2 sampling without replacement (see CenterInit::spread).
InterestCenters spread_centers(std::span<const diff::Matrix> corpus, std::size_t K, std::uint64_t seed);
// Entries ~ N(0, stddev^2).
InterestCenters random_centers(std::size_t K, std::size_t dim, double stddev, std::uint64_t seed);
// Root mean square of every entry in the corpus; used to scale random centers.
double corpus_rms(std::span<const diff::Matrix> corpus);

// Mini-batch entropy-regularized center learning. Each iteration samples
// batch_size users uniformly without replacement, averages l_e over them,
// back-propagates into C and applies the configured optimizer. Stops after
// max_iters iterations. A batch larger than the corpus is clamped with a
// warning.
CenterPretrainResult pretrain_centers(std::span<const diff::Matrix> corpus, const CenterPretrainConfig& config);

// Mean l_e over the given sequences (no gradients).
double mean_entropy_loss(std::span<const diff::Matrix> corpus, std::span<const std::size_t> users,
                         const InterestCenters& centers);

// Hard-assigns each behavior to argmax_j P_tj and returns the fraction of
// behaviors that carry the majority ground-truth label of their cluster.
double purity(const InterestCenters& centers, const diff::Matrix& embedded_behaviors,
              std::span<const std::uint32_t> labels);

void save_centers(const InterestCenters& centers, const std::filesystem::path& path);
InterestCenters load_centers(const std::filesystem::path& path);

}  // namespace mfn::centers
