#include "mfn/centers/centers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "mfn/diff/adam.hpp"
#include "mfn/diff/nn.hpp"
#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "mfn/features/embedding_io.hpp"

namespace mfn::centers {

InterestCenters::InterestCenters(diff::Matrix init, std::string name) : C(std::move(name), std::move(init)) {
  if (C.rows() == 0) throw ConfigError("interest centers need K >= 1");
}

diff::Matrix assignment_probs(const diff::Matrix& seq_fixed, const InterestCenters& centers) {
  return diff::softmax_rows(diff::matmul_bt(seq_fixed, centers.C.value));
}

diff::Var assignment_probs(diff::Tape& tape, diff::Var seq_fixed, InterestCenters& centers) {
  return diff::softmax_rows(diff::matmul_bt(seq_fixed, tape.parameter(centers.C)));
}

EntropyLossParts entropy_losses(const diff::Matrix& P) {
  const std::size_t n = P.rows(), k = P.cols();
  if (n == 0 || k == 0) throw ContractError("entropy_losses: empty assignment matrix");
  std::vector<double> mean(k, 0.0);
  double row_entropy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = P(t, j);
      total += p;
      mean[j] += p;
      row_entropy += p * std::log(std::max(p, kLogFloor));
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ContractError("entropy_losses: row " + std::to_string(t) + " sums to " + std::to_string(total));
    }
  }
  double mean_entropy = 0.0;
  for (double& m : mean) {
    m /= static_cast<double>(n);
    mean_entropy += m * std::log(std::max(m, kLogFloor));
  }
  EntropyLossParts parts;
  parts.l_se = -row_entropy / (static_cast<double>(k) * static_cast<double>(n));
  parts.l_me = -mean_entropy / static_cast<double>(k);
  parts.l_e = parts.l_se - parts.l_me;
  return parts;
}

EntropyLossVars entropy_losses(diff::Var P) {
  const double n = static_cast<double>(P.rows()), k = static_cast<double>(P.cols());
  diff::Var mean = diff::mean_rows(P);
  EntropyLossVars out;
  out.l_me = diff::scale(diff::sum(diff::hadamard(mean, diff::log_clamped(mean, kLogFloor))), -1.0 / k);
  out.l_se = diff::scale(diff::sum(diff::hadamard(P, diff::log_clamped(P, kLogFloor))), -1.0 / (k * n));
  out.l_e = diff::sub(out.l_se, out.l_me);
  return out;
}

InterestCenters sampled_centers(std::span<const diff::Matrix> corpus, std::size_t K, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> behaviors;
  for (std::size_t u = 0; u < corpus.size(); ++u)
    for (std::size_t t = 0; t < corpus[u].rows(); ++t) behaviors.emplace_back(u, t);
  if (behaviors.size() < K) {
    throw InputError("cannot sample " + std::to_string(K) + " centers from " + std::to_string(behaviors.size()) +
                     " behaviors");
  }
  diff::Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  std::sample(behaviors.begin(), behaviors.end(), std::back_inserter(picked), K, rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  diff::Matrix init(K, corpus.front().cols());
  for (std::size_t j = 0; j < K; ++j) {
    auto src = corpus[picked[j].first].row(picked[j].second);
    std::copy(src.begin(), src.end(), init.row(j).begin());
  }
  return InterestCenters(std::move(init));
}

InterestCenters spread_centers(std::span<const diff::Matrix> corpus, std::size_t K, std::uint64_t seed) {
  std::vector<std::span<const double>> rows;
  for (const auto& m : corpus)
    for (std::size_t t = 0; t < m.rows(); ++t) rows.push_back(m.row(t));
  if (rows.size() < K) {
    throw InputError("cannot sample " + std::to_string(K) + " centers from " + std::to_string(rows.size()) +
                     " behaviors");
  }
  const std::size_t dim = corpus.front().cols();
  auto dist2 = [&](std::size_t r, std::span<const double> c) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double diff = rows[r][i] - c[i];
      d2 += diff * diff;
    }
    return d2;
  };

  diff::Rng rng(seed);
  diff::Matrix init(K, dim);
  std::vector<double> nearest(rows.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(rows.size(), false);
  std::vector<double> trial(rows.size());
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(K)));
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng);
  for (std::size_t j = 0;; ++j) {
    chosen[pick] = true;
    std::copy(rows[pick].begin(), rows[pick].end(), init.row(j).begin());
    for (std::size_t r = 0; r < rows.size(); ++r) nearest[r] = chosen[r] ? 0.0 : std::min(nearest[r], dist2(r, rows[pick]));
    if (j + 1 == K) break;

    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    if (!(total > 0.0)) {
      // Every unchosen behavior duplicates a center; fall back to uniform.
      std::vector<std::size_t> rest;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!chosen[r]) rest.push_back(r);
      }
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
      continue;
    }
    // Greedy D^2 sampling: keep the candidate that lowers the potential most.
    std::discrete_distribution<std::size_t> d2(nearest.begin(), nearest.end());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t cand = d2(rng);
      double potential = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) potential += std::min(nearest[r], dist2(r, rows[cand]));
      if (potential < best) {
        best = potential;
        pick = cand;
      }
    }
  }
  return InterestCenters(std::move(init));
}

InterestCenters random_centers(std::size_t K, std::size_t dim, double stddev, std::uint64_t seed) {
  diff::Rng rng(seed);
  return InterestCenters(diff::normal_matrix(K, dim, stddev, rng));
}

double corpus_rms(std::span<const diff::Matrix> corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& m : corpus) {
    for (double v : m.data()) total += v * v;
    count += m.size();
  }
  return count == 0 ? 0.0 : std::sqrt(total / static_cast<double>(count));
}

double mean_entropy_loss(std::span<const diff::Matrix> corpus, std::span<const std::size_t> users,
                         const InterestCenters& centers) {
  double total = 0.0;
  for (std::size_t u : users) total += entropy_losses(assignment_probs(corpus[u], centers)).l_e;
  return total / static_cast<double>(users.size());
}

CenterPretrainResult pretrain_centers(std::span<const diff::Matrix> corpus, const CenterPretrainConfig& config) {
  if (corpus.empty()) throw InputError("pretrain_centers: empty corpus");
  if (!(config.lr > 0.0)) throw ConfigError("pretrain_centers: learning rate must be positive");
  if (config.K == 0) throw ConfigError("pretrain_centers: K must be at least 1");
  const std::size_t dim = corpus.front().cols();
  for (const auto& m : corpus) {
    if (m.cols() != dim || m.rows() == 0) throw DimensionError("pretrain_centers: sequences must be nonempty N x d");
  }

  CenterPretrainResult result;
  std::size_t batch = config.batch_size;
  if (batch == 0) throw ConfigError("pretrain_centers: batch size must be positive");
  if (batch > corpus.size()) {
    result.warnings.push_back("batch size " + std::to_string(batch) + " exceeds " + std::to_string(corpus.size()) +
                              " users; clamped");
    std::clog << "warning: pretrain_centers: " << result.warnings.back() << '\n';
    batch = corpus.size();
  }
  result.batch_size_used = batch;

  switch (config.init) {
    case CenterInit::sampled:
      result.centers = sampled_centers(corpus, config.K, config.seed);
      break;
    case CenterInit::spread:
      result.centers = spread_centers(corpus, config.K, config.seed);
      break;
    case CenterInit::random_normal:
      result.centers = random_centers(config.K, dim, corpus_rms(corpus), config.seed);
      break;
  }

  diff::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> all(corpus.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> eval_users;
  std::sample(all.begin(), all.end(), std::back_inserter(eval_users),
              std::min(std::max<std::size_t>(config.eval_batch_size, 1), corpus.size()), rng);
  result.initial_eval_loss = mean_entropy_loss(corpus, eval_users, result.centers);

  diff::Parameter* params[] = {&result.centers.C};
  const diff::AdamConfig adam{config.lr};
  std::vector<std::size_t> users;
  for (std::size_t it = 0; it < config.max_iters; ++it) {
    users.clear();
    std::sample(all.begin(), all.end(), std::back_inserter(users), batch, rng);
    diff::Tape tape;
    std::vector<diff::Var> losses;
    losses.reserve(users.size());
    for (std::size_t u : users) {
      diff::Var P = assignment_probs(tape, tape.constant(corpus[u]), result.centers);
      losses.push_back(entropy_losses(P).l_e);
    }
    diff::Var loss = diff::scale(diff::sum(diff::concat_rows(losses)), 1.0 / static_cast<double>(users.size()));
    result.batch_losses.push_back(loss.value()(0, 0));
    tape.backward(loss);
    if (config.optimizer == CenterOptimizer::adam) {
      diff::adam_step(params, adam);
    } else {
      diff::sgd_step(params, config.lr);
    }
  }
  result.final_eval_loss = mean_entropy_loss(corpus, eval_users, result.centers);
  return result;
}

double purity(const InterestCenters& centers, const diff::Matrix& embedded_behaviors,
              std::span<const std::uint32_t> labels) {
  if (labels.size() != embedded_behaviors.rows()) {
    throw DimensionError("purity: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embedded_behaviors.rows()) + " behaviors");
  }
  if (labels.empty()) return 0.0;
  const diff::Matrix P = assignment_probs(embedded_behaviors, centers);
  std::vector<std::map<std::uint32_t, std::size_t>> counts(centers.K());
  for (std::size_t t = 0; t < P.rows(); ++t) {
    auto row = P.row(t);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ++counts[best][labels[t]];
  }
  std::size_t majority = 0;
  for (const auto& c : counts) {
    std::size_t top = 0;
    for (const auto& [label, n] : c) top = std::max(top, n);
    majority += top;
  }
  return static_cast<double>(majority) / static_cast<double>(labels.size());
}

void save_centers(const InterestCenters& centers, const std::filesystem::path& path) {
  features::save_token_matrix(features::label_rows(centers.C.value, "center"), path);
}

InterestCenters load_centers(const std::filesystem::path& path) {
  return InterestCenters(features::unlabel_rows(features::load_token_matrix(path), "center"));
}

}  // namespace mfn::centers
